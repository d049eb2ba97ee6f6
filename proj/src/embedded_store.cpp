#include "threen1/embedded_store.hpp"

#include <algorithm>
#include <exception>
#include <limits>

#include "threen1/error.hpp"

namespace threen1 {

namespace {

// Byte offsets where each segment of an encoded path ends.
template <class F>
void for_each_boundary(std::string_view enc, F&& f) {
    std::size_t pos = 0;
    while (pos < enc.size()) {
        auto crlf = enc.find("\r\n", pos);
        std::size_t len = 0;
        for (std::size_t i = pos + 1; i < crlf; ++i) len = len * 10 + static_cast<std::size_t>(enc[i] - '0');
        pos = crlf + 2 + len + 2;
        f(pos);
    }
}

std::size_t last_segment_start(std::string_view enc) {
    std::size_t prev = 0, last = 0;
    for_each_boundary(enc, [&](std::size_t end) {
        last = prev;
        prev = end;
    });
    return last;
}

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
    std::int64_t out = 0;
    if (__builtin_add_overflow(a, b, &out)) throw StoreError("increment or decrement would overflow");
    return out;
}

}  // namespace

// ---- shard-level primitives (caller holds the shard mutex) ----

EmbeddedStore::Versioned EmbeddedStore::read_in(Shard& s, const NodeHandle& h) {
    auto it = s.cells.find(h.encoded());
    if (it == s.cells.end()) return {};
    const Cell& c = it->second;
    if (!c.present) return {std::nullopt, c.version};
    return {c.value, c.version};
}

void EmbeddedStore::account(Shard& s, std::string_view enc, int sign) {
    auto adjust = [sign](std::unordered_map<std::string, std::size_t>& m, std::string_view key) {
        if (sign > 0) {
            ++m[std::string(key)];
        } else {
            auto it = m.find(std::string(key));
            if (it != m.end() && --it->second == 0) m.erase(it);
        }
    };
    std::size_t parent = last_segment_start(enc);
    if (parent == 0) return;  // bare varname: no ancestors
    adjust(s.children, enc.substr(0, parent));
    for_each_boundary(enc.substr(0, parent), [&](std::size_t end) { adjust(s.descendants, enc.substr(0, end)); });
}

void EmbeddedStore::put_in(Shard& s, const NodeHandle& h, std::string_view value) {
    auto [it, inserted] = s.cells.try_emplace(h.encoded());
    Cell& c = it->second;
    if (!c.present) {
        c.present = true;
        account(s, h.encoded(), +1);
    }
    c.value.assign(value);
    c.version = ++s.clock;
}

std::int64_t EmbeddedStore::incr_in(Shard& s, const NodeHandle& h, std::int64_t delta) {
    auto cur = read_in(s, h);
    std::int64_t base = cur.value ? parse_integer(*cur.value) : 0;
    std::int64_t next = checked_add(base, delta);
    put_in(s, h, std::to_string(next));
    return next;
}

void EmbeddedStore::erase_in(Shard& s, const NodeHandle& h, bool keep_tombstone) {
    auto it = s.cells.find(h.encoded());
    if (it == s.cells.end()) {
        if (keep_tombstone) s.cells.try_emplace(h.encoded()).first->second.version = ++s.clock;
        return;
    }
    Cell& c = it->second;
    if (c.present) {
        c.present = false;
        c.value.clear();
        c.value.shrink_to_fit();
        account(s, h.encoded(), -1);
    }
    c.version = ++s.clock;
}

void EmbeddedStore::touch_in(Shard& s, const NodeHandle& h) {
    s.cells.try_emplace(h.encoded()).first->second.version = ++s.clock;
}

// ---- self-locking single-node operations ----

std::optional<std::string> EmbeddedStore::get(const NodeHandle& h) {
    Shard& s = shard_for(h);
    std::lock_guard lk(s.mu);
    auto it = s.cells.find(h.encoded());
    if (it == s.cells.end() || !it->second.present) return std::nullopt;
    return it->second.value;
}

EmbeddedStore::Versioned EmbeddedStore::read(const NodeHandle& h) {
    Shard& s = shard_for(h);
    std::lock_guard lk(s.mu);
    return read_in(s, h);
}

std::uint64_t EmbeddedStore::version(const NodeHandle& h) {
    Shard& s = shard_for(h);
    std::lock_guard lk(s.mu);
    auto it = s.cells.find(h.encoded());
    return it == s.cells.end() ? 0 : it->second.version;
}

void EmbeddedStore::set(const NodeHandle& h, std::string_view value) {
    check_value_size(value);
    Shard& s = shard_for(h);
    std::lock_guard lk(s.mu);
    put_in(s, h, value);
}

std::int64_t EmbeddedStore::incr(const NodeHandle& h, std::int64_t delta) {
    Shard& s = shard_for(h);
    std::lock_guard lk(s.mu);
    return incr_in(s, h, delta);
}

void EmbeddedStore::erase(const NodeHandle& h) {
    Shard& s = shard_for(h);
    std::lock_guard lk(s.mu);
    erase_in(s, h, true);
}

void EmbeddedStore::delete_tree(const NodeHandle& h) {
    auto all = lock_all();
    all.delete_tree(h);
}

void EmbeddedStore::set_tree(const NodeHandle& h, const Session::Entries& entries) {
    if (entries.empty()) return;
    std::vector<NodeHandle> kids;
    kids.reserve(entries.size());
    for (const auto& [sub, value] : entries) {
        check_value_size(value);
        kids.push_back(h.child(sub));
    }
    std::vector<const NodeHandle*> ptrs;
    for (const auto& k : kids) ptrs.push_back(&k);
    auto locked = lock(ptrs);
    std::size_t i = 0;
    for (const auto& [sub, value] : entries) locked.set(kids[i++], value);
}

std::size_t EmbeddedStore::subtree_size(const NodeHandle& h) {
    auto all = lock_all();
    return all.subtree_size(h);
}

std::vector<std::pair<std::string, std::string>> EmbeddedStore::children(const NodeHandle& h) {
    auto all = lock_all();
    return all.children(h);
}

void EmbeddedStore::clear() {
    auto all = lock_all();
    all.clear();
}

std::size_t EmbeddedStore::size() {
    auto all = lock_all();
    std::size_t n = 0;
    for (auto& s : shards_) {
        for (const auto& [k, c] : s.cells) n += c.present ? 1 : 0;
    }
    return n;
}

void EmbeddedStore::delete_tree_all_locked(const NodeHandle& h) {
    std::size_t below = 0;
    for (auto& s : shards_) {
        auto it = s.descendants.find(h.encoded());
        if (it != s.descendants.end()) below += it->second;
    }
    if (below > 0) {
        for (auto& s : shards_) {
            for (auto it = s.cells.begin(); it != s.cells.end();) {
                const std::string& k = it->first;
                if (k.size() > h.encoded().size() && k.starts_with(h.encoded())) {
                    if (it->second.present) account(s, k, -1);
                    it = s.cells.erase(it);
                } else {
                    ++it;
                }
            }
        }
    }
    erase_in(shard_for(h), h, true);
}

std::size_t EmbeddedStore::subtree_size_all_locked(const NodeHandle& h) {
    std::size_t n = 0;
    for (auto& s : shards_) {
        auto it = s.children.find(h.encoded());
        if (it != s.children.end()) n += it->second;
    }
    return n;
}

bool EmbeddedStore::commit(std::span<const ReadStamp> reads, std::span<const Write> writes) {
    bool whole_tree = std::any_of(writes.begin(), writes.end(),
                                  [](const Write& w) { return w.kind == Write::Kind::delete_tree; });
    std::vector<const NodeHandle*> touched;
    if (!whole_tree) {
        touched.reserve(reads.size() + writes.size());
        for (const auto& r : reads) touched.push_back(&r.handle);
        for (const auto& w : writes) touched.push_back(&w.handle);
    }
    auto locked = whole_tree ? lock_all() : lock(touched);

    for (const auto& r : reads) {
        if (locked.read(r.handle).version != r.version) return false;
    }
    std::exception_ptr first_error;
    for (const auto& w : writes) {
        try {
            switch (w.kind) {
                case Write::Kind::set: locked.set(w.handle, w.value); break;
                case Write::Kind::incr: locked.incr(w.handle, w.delta); break;
                case Write::Kind::erase: locked.erase(w.handle); break;
                case Write::Kind::touch: locked.touch(w.handle); break;
                case Write::Kind::delete_tree: locked.delete_tree(w.handle); break;
            }
        } catch (const StoreError&) {
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
    return true;
}

EmbeddedStore::Locked EmbeddedStore::lock(std::span<const NodeHandle* const> handles) {
    std::vector<std::size_t> idx;
    idx.reserve(handles.size());
    for (const NodeHandle* h : handles) idx.push_back(h->hash() % kShards);
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return Locked(*this, std::move(idx));
}

EmbeddedStore::Locked EmbeddedStore::lock_all() {
    std::vector<std::size_t> idx(kShards);
    for (std::size_t i = 0; i < kShards; ++i) idx[i] = i;
    return Locked(*this, std::move(idx));
}

// ---- Locked ----

EmbeddedStore::Locked::Locked(EmbeddedStore& store, std::vector<std::size_t> shards) : store_(&store) {
    guards_.reserve(shards.size());
    for (std::size_t i : shards) {
        guards_.emplace_back(store.shards_[i].mu);
        held_[i] = true;
    }
    all_ = shards.size() == kShards;
}

EmbeddedStore::Shard& EmbeddedStore::Locked::checked(const NodeHandle& h) {
    std::size_t i = h.hash() % kShards;
    if (!held_[i]) throw UsageError("node " + to_string(h) + " is outside the locked shard set");
    return store_->shards_[i];
}

void EmbeddedStore::Locked::require_all(const char* what) const {
    if (!all_) throw UsageError(std::string(what) + " needs every shard locked");
}

EmbeddedStore::Versioned EmbeddedStore::Locked::read(const NodeHandle& h) {
    return read_in(checked(h), h);
}

void EmbeddedStore::Locked::set(const NodeHandle& h, std::string_view value) {
    check_value_size(value);
    put_in(checked(h), h, value);
}

std::int64_t EmbeddedStore::Locked::incr(const NodeHandle& h, std::int64_t delta) {
    return incr_in(checked(h), h, delta);
}

void EmbeddedStore::Locked::erase(const NodeHandle& h) {
    erase_in(checked(h), h, true);
}

void EmbeddedStore::Locked::touch(const NodeHandle& h) {
    touch_in(checked(h), h);
}

void EmbeddedStore::Locked::delete_tree(const NodeHandle& h) {
    require_all("delete_tree");
    store_->delete_tree_all_locked(h);
}

std::size_t EmbeddedStore::Locked::subtree_size(const NodeHandle& h) {
    require_all("subtree_size");
    return store_->subtree_size_all_locked(h);
}

std::vector<std::pair<std::string, std::string>> EmbeddedStore::Locked::children(const NodeHandle& h) {
    require_all("children");
    std::vector<std::pair<std::string, std::string>> out;
    const std::string& prefix = h.encoded();
    for (auto& s : store_->shards_) {
        for (const auto& [k, c] : s.cells) {
            if (!c.present || k.size() <= prefix.size() || !k.starts_with(prefix)) continue;
            if (last_segment_start(k) != prefix.size()) continue;
            auto parts = decode_path(std::string_view(k).substr(prefix.size()));
            out.emplace_back(std::string(parts.front()), c.value);
        }
    }
    return out;
}

void EmbeddedStore::Locked::clear() {
    require_all("clear");
    for (auto& s : store_->shards_) {
        s.cells.clear();
        s.children.clear();
        s.descendants.clear();
    }
}

// ---- EmbeddedSession ----

namespace {

// Transaction view: reads are versioned and cached (repeatable), writes are
// buffered until commit.
class EmbeddedTxn final : public KeyValueOps {
public:
    explicit EmbeddedTxn(EmbeddedStore& store) : store_(store) {}

    std::optional<std::string> get(const NodeHandle& h) override {
        if (auto w = written_.find(h.encoded()); w != written_.end()) return writes_[w->second].value;
        if (auto r = read_.find(h.encoded()); r != read_.end()) return r->second.value;
        auto v = store_.read(h);
        stamps_.push_back({h, v.version});
        read_.emplace(h.encoded(), v);
        return v.value;
    }

    void set(const NodeHandle& h, std::string_view value) override {
        check_value_size(value);
        if (auto w = written_.find(h.encoded()); w != written_.end()) {
            writes_[w->second].value.assign(value);
            return;
        }
        written_.emplace(h.encoded(), writes_.size());
        writes_.push_back({EmbeddedStore::Write::Kind::set, h, std::string(value)});
    }

    std::int64_t incr(const NodeHandle& h, std::int64_t delta) override {
        auto cur = get(h);
        std::int64_t base = cur ? parse_integer(*cur) : 0;
        std::int64_t next = checked_add(base, delta);
        set(h, std::to_string(next));
        return next;
    }

    bool commit() { return store_.commit(stamps_, writes_); }

private:
    EmbeddedStore& store_;
    std::vector<EmbeddedStore::ReadStamp> stamps_;
    std::unordered_map<std::string, EmbeddedStore::Versioned> read_;
    std::vector<EmbeddedStore::Write> writes_;
    std::unordered_map<std::string, std::size_t> written_;
};

}  // namespace

EmbeddedSession::EmbeddedSession(EmbeddedStore& store) : store_(store), owner_(store.new_owner()) {}

EmbeddedSession::~EmbeddedSession() {
    store_.locks().release_all(owner_);
}

void EmbeddedSession::require_not_multi(const char* what) const {
    if (in_multi_) throw UsageError(std::string(what) + " is not available between multi() and exec()");
}

std::optional<std::string> EmbeddedSession::get(const NodeHandle& h) {
    require_not_multi("get");
    return store_.get(h);
}

void EmbeddedSession::set(const NodeHandle& h, std::string_view value) {
    check_value_size(value);
    if (in_multi_) {
        queued_.push_back({EmbeddedStore::Write::Kind::set, h, std::string(value)});
        return;
    }
    store_.set(h, value);
}

std::int64_t EmbeddedSession::incr(const NodeHandle& h, std::int64_t delta) {
    require_not_multi("incr");
    return store_.incr(h, delta);
}

void EmbeddedSession::delete_tree(const NodeHandle& h) {
    if (in_multi_) {
        queued_.push_back({EmbeddedStore::Write::Kind::delete_tree, h, {}});
        return;
    }
    store_.delete_tree(h);
}

void EmbeddedSession::set_tree(const NodeHandle& h, const Entries& entries) {
    if (in_multi_) {
        for (const auto& [sub, value] : entries) {
            check_value_size(value);
            queued_.push_back({EmbeddedStore::Write::Kind::set, h.child(sub), value});
        }
        return;
    }
    store_.set_tree(h, entries);
}

std::size_t EmbeddedSession::subtree_size(const NodeHandle& h) {
    require_not_multi("subtree_size");
    return store_.subtree_size(h);
}

std::vector<std::pair<std::string, std::string>> EmbeddedSession::children(const NodeHandle& h) {
    require_not_multi("children");
    return store_.children(h);
}

void EmbeddedSession::watch(std::span<const NodeHandle> nodes) {
    if (in_multi_) throw UsageError("WATCH inside MULTI is not allowed");
    for (const auto& h : nodes) {
        bool seen = std::any_of(watched_.begin(), watched_.end(),
                                [&](const EmbeddedStore::ReadStamp& s) { return s.handle == h; });
        if (!seen) watched_.push_back({h, store_.version(h)});
    }
}

void EmbeddedSession::unwatch() {
    watched_.clear();
}

void EmbeddedSession::multi() {
    if (in_multi_) throw UsageError("MULTI calls can not be nested");
    in_multi_ = true;
}

bool EmbeddedSession::exec() {
    if (!in_multi_) throw UsageError("EXEC without MULTI");
    auto watched = std::move(watched_);
    auto queued = std::move(queued_);
    watched_.clear();
    queued_.clear();
    in_multi_ = false;
    return store_.commit(watched, queued);
}

void EmbeddedSession::discard() {
    if (!in_multi_) throw UsageError("DISCARD without MULTI");
    watched_.clear();
    queued_.clear();
    in_multi_ = false;
}

bool EmbeddedSession::grab(const NodeHandle& lock, Timeout timeout) {
    return store_.locks().grab(lock, owner_, timeout);
}

void EmbeddedSession::release(const NodeHandle& lock) {
    store_.locks().release(lock, owner_);
}

void EmbeddedSession::flush_all() {
    require_not_multi("flush_all");
    store_.clear();
}

void EmbeddedSession::run_transaction(const Body& body) {
    require_not_multi("transaction");
    ++stats_.transactions;
    for (unsigned attempt = 1;; ++attempt) {
        ++stats_.attempts;
        EmbeddedTxn tx(store_);
        body(tx);
        if (tx.commit()) {
            stats_.last_attempts = attempt;
            return;
        }
        if (attempt >= retry_limit_) {
            stats_.last_attempts = attempt;
            throw RetryLimitError("transaction gave up after " + std::to_string(attempt) + " conflicting attempts",
                                  attempt);
        }
        retry_backoff(attempt);
    }
}

}  // namespace threen1
