#include "threen1/resp_client.hpp"

#include <algorithm>
#include <unordered_map>

#include "threen1/error.hpp"

namespace threen1 {

RespConnection::RespConnection(const Address& addr) : addr_(addr), sock_(connect_tcp(addr)) {}

RespFrame RespConnection::call(const std::vector<std::string_view>& args) {
    return roundtrip(encode_command(args));
}

RespFrame RespConnection::roundtrip(std::string_view request) {
    if (!sock_) throw ConnectionError("connection to " + addr_.str() + " is closed");
    sock_.send_all(request);
    return read_reply();
}

RespFrame RespConnection::read_reply() {
    for (;;) {
        std::optional<Decoded> d;
        try {
            d = decode_frame(std::string_view(buf_).substr(pos_));
        } catch (const ProtocolError& e) {
            sock_.close();
            throw ProtocolError("bad reply from " + addr_.str() + ": " + e.what());
        }
        if (d) {
            pos_ += d->consumed;
            if (pos_ == buf_.size()) {
                buf_.clear();
                pos_ = 0;
            }
            return std::move(d->frame);
        }
        if (pos_ > 0) {
            buf_.erase(0, pos_);
            pos_ = 0;
        }
        if (sock_.recv_some(buf_) == 0) {
            sock_.close();
            throw ConnectionError("server " + addr_.str() + " closed the connection");
        }
    }
}

namespace {

void append_header(std::string& out, std::size_t count) {
    out.push_back('*');
    out.append(std::to_string(count));
    out.append("\r\n");
}

}  // namespace

RespSession::RespSession(const Address& addr) : conn_(addr) {}

RespFrame RespSession::checked(RespFrame reply, const char* what) {
    if (reply.is_error()) throw StoreError(std::string(what) + ": " + reply.text);
    return reply;
}

void RespSession::expect_queued(const RespFrame& reply) {
    if (reply.is_error()) throw StoreError("command rejected inside MULTI: " + reply.text);
    if (!(reply.type == RespFrame::Type::simple && reply.text == "QUEUED")) {
        throw ProtocolError("expected +QUEUED, got " + describe(reply));
    }
}

void RespSession::require_not_multi(const char* what) const {
    if (in_multi_) throw UsageError(std::string(what) + " is not available between multi() and exec()");
}

RespFrame RespSession::node_command(std::string_view scalar_verb, std::string_view hash_verb, const NodeHandle& h,
                                    std::initializer_list<std::string_view> extra) {
    if (h.depth() > 1) {
        throw UsageError("the RESP backend addresses at most one subscript; got " + to_string(h));
    }
    std::string_view verb = h.depth() == 0 ? scalar_verb : hash_verb;
    if (verb.empty()) throw UsageError("operation not available on " + to_string(h) + " over RESP");
    std::size_t size = 16 + bulk_size(verb) + h.encoded().size();
    for (auto e : extra) size += bulk_size(e);
    std::string req;
    req.reserve(size);
    append_header(req, 1 + 1 + h.depth() + extra.size());
    append_bulk(req, verb);
    req.append(h.encoded());
    for (auto e : extra) append_bulk(req, e);
    return conn_.roundtrip(req);
}

std::optional<std::string> RespSession::get(const NodeHandle& h) {
    require_not_multi("get");
    auto r = checked(node_command("GET", "HGET", h), "GET");
    if (r.type != RespFrame::Type::bulk) throw ProtocolError("GET reply was " + describe(r));
    if (r.null) return std::nullopt;
    return std::move(r.text);
}

void RespSession::set(const NodeHandle& h, std::string_view value) {
    check_value_size(value);
    auto r = node_command("SET", "HSET", h, {value});
    if (in_multi_) return expect_queued(r);
    checked(std::move(r), "SET");
}

std::int64_t RespSession::incr(const NodeHandle& h, std::int64_t delta) {
    require_not_multi("incr");
    auto d = std::to_string(delta);
    auto r = checked(node_command("INCRBY", "HINCRBY", h, {d}), "INCRBY");
    if (r.type != RespFrame::Type::integer) throw ProtocolError("INCRBY reply was " + describe(r));
    return r.number;
}

void RespSession::delete_tree(const NodeHandle& h) {
    auto r = node_command("DEL", "HDEL", h);
    if (in_multi_) return expect_queued(r);
    checked(std::move(r), "DEL");
}

void RespSession::set_tree(const NodeHandle& h, const Entries& entries) {
    if (h.depth() != 0) throw UsageError("set_tree over RESP needs a bare key; got " + to_string(h));
    if (entries.empty()) return;
    std::string req;
    append_header(req, 2 + 2 * entries.size());
    append_bulk(req, "HSET");
    req.append(h.encoded());
    for (const auto& [sub, value] : entries) {
        check_value_size(value);
        append_bulk(req, sub);
        append_bulk(req, value);
    }
    auto r = conn_.roundtrip(req);
    if (in_multi_) return expect_queued(r);
    checked(std::move(r), "HSET");
}

std::size_t RespSession::subtree_size(const NodeHandle& h) {
    require_not_multi("subtree_size");
    auto r = checked(node_command("HLEN", "", h), "HLEN");
    if (r.type != RespFrame::Type::integer || r.number < 0) throw ProtocolError("HLEN reply was " + describe(r));
    return static_cast<std::size_t>(r.number);
}

std::vector<std::pair<std::string, std::string>> RespSession::children(const NodeHandle& h) {
    require_not_multi("children");
    auto r = checked(node_command("HGETALL", "", h), "HGETALL");
    if (r.type != RespFrame::Type::array || r.null || r.elements.size() % 2) {
        throw ProtocolError("HGETALL reply was " + describe(r));
    }
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < r.elements.size(); i += 2) {
        out.emplace_back(std::move(r.elements[i].text), std::move(r.elements[i + 1].text));
    }
    return out;
}

void RespSession::watch(std::span<const NodeHandle> nodes) {
    if (in_multi_) throw UsageError("WATCH inside MULTI is not allowed");
    if (nodes.empty()) return;
    std::vector<std::string> keys;
    for (const auto& h : nodes) {
        std::string k(h.varname());
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(std::move(k));
    }
    std::vector<std::string_view> args{"WATCH"};
    for (const auto& k : keys) args.push_back(k);
    checked(conn_.call(args), "WATCH");
}

void RespSession::unwatch() {
    checked(conn_.call({"UNWATCH"}), "UNWATCH");
}

void RespSession::multi() {
    if (in_multi_) throw UsageError("MULTI calls can not be nested");
    checked(conn_.call({"MULTI"}), "MULTI");
    in_multi_ = true;
}

bool RespSession::exec() {
    if (!in_multi_) throw UsageError("EXEC without MULTI");
    in_multi_ = false;
    auto r = checked(conn_.call({"EXEC"}), "EXEC");
    if (r.type != RespFrame::Type::array) throw ProtocolError("EXEC reply was " + describe(r));
    if (r.null) return false;
    for (const auto& e : r.elements) {
        if (e.is_error()) throw StoreError("command inside EXEC failed: " + e.text);
    }
    return true;
}

void RespSession::discard() {
    if (!in_multi_) throw UsageError("DISCARD without MULTI");
    in_multi_ = false;
    checked(conn_.call({"DISCARD"}), "DISCARD");
}

void RespSession::flush_all() {
    require_not_multi("flush_all");
    checked(conn_.call({"FLUSHALL"}), "FLUSHALL");
}

RespFrame RespSession::ping() {
    return conn_.call({"PING"});
}

// Restartable transactions over WATCH/MULTI/EXEC. Each key is WATCHed right
// before its first read; writes are buffered and sent inside MULTI at commit.
class RespTxn final : public KeyValueOps {
public:
    explicit RespTxn(RespSession& s) : s_(s) {}

    std::optional<std::string> get(const NodeHandle& h) override {
        if (auto w = written_.find(h.encoded()); w != written_.end()) return writes_[w->second].second;
        if (auto r = read_.find(h.encoded()); r != read_.end()) return r->second;
        std::string key(h.varname());
        if (std::find(watched_.begin(), watched_.end(), key) == watched_.end()) {
            s_.checked(s_.conn_.call({"WATCH", key}), "WATCH");
            watched_.push_back(std::move(key));
        }
        auto v = s_.get(h);
        read_.emplace(h.encoded(), v);
        return v;
    }

    void set(const NodeHandle& h, std::string_view value) override {
        check_value_size(value);
        if (h.depth() > 1) throw UsageError("the RESP backend addresses at most one subscript");
        if (auto w = written_.find(h.encoded()); w != written_.end()) {
            writes_[w->second].second.assign(value);
            return;
        }
        written_.emplace(h.encoded(), writes_.size());
        writes_.emplace_back(h, std::string(value));
    }

    std::int64_t incr(const NodeHandle& h, std::int64_t delta) override {
        auto cur = get(h);
        std::int64_t base = cur ? parse_integer(*cur) : 0;
        std::int64_t next = 0;
        if (__builtin_add_overflow(base, delta, &next)) throw StoreError("increment or decrement would overflow");
        set(h, std::to_string(next));
        return next;
    }

    bool commit() {
        if (watched_.empty() && writes_.empty()) return true;
        s_.multi();
        try {
            for (const auto& [h, v] : writes_) s_.set(h, v);
        } catch (...) {
            s_.discard();
            throw;
        }
        return s_.exec();
    }

    void abandon() {
        if (!watched_.empty()) s_.unwatch();
    }

private:
    RespSession& s_;
    std::vector<std::string> watched_;
    std::unordered_map<std::string, std::optional<std::string>> read_;
    std::vector<std::pair<NodeHandle, std::string>> writes_;
    std::unordered_map<std::string, std::size_t> written_;
};

void RespSession::run_transaction(const Body& body) {
    require_not_multi("transaction");
    ++stats_.transactions;
    for (unsigned attempt = 1;; ++attempt) {
        ++stats_.attempts;
        RespTxn tx(*this);
        try {
            body(tx);
        } catch (...) {
            try {
                tx.abandon();
            } catch (const Error&) {
            }
            throw;
        }
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
