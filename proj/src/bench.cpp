#include "threen1/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <thread>

#include <json.hpp>

#include "threen1/error.hpp"
#include "threen1/resp_client.hpp"

namespace threen1 {

std::string_view to_string(Backend b) {
    return b == Backend::embedded ? "embedded" : "resp";
}

std::string_view to_string(Coordination c) {
    return c == Coordination::locks ? "locks" : "polling";
}

Backend parse_backend(std::string_view s) {
    if (s == "embedded") return Backend::embedded;
    if (s == "resp") return Backend::resp;
    throw UsageError("unknown backend \"" + std::string(s) + "\" (expected embedded or resp)");
}

Coordination parse_coordination(std::string_view s) {
    if (s == "locks") return Coordination::locks;
    if (s == "polling") return Coordination::polling;
    throw UsageError("unknown coordination \"" + std::string(s) + "\" (expected locks or polling)");
}

BlockSpec make_blocks(std::uint64_t x, std::uint64_t block_size) {
    if (x < 1) throw UsageError("limit must be at least 1");
    if (block_size < 1) throw UsageError("block size must be at least 1");
    BlockSpec b;
    b.boundaries.reserve(x / block_size + 2);
    for (std::uint64_t v = 0; v < x; v += std::min(block_size, x - v)) b.boundaries.push_back(v);
    b.boundaries.push_back(x);
    return b;
}

EventLog::EventLog(const std::string& path) : file_(std::fopen(path.c_str(), "w")) {
    if (!file_) throw UsageError("cannot open event log \"" + path + "\" for writing");
}

EventLog::~EventLog() {
    if (file_) std::fclose(file_);
}

void EventLog::add(std::string kind, int worker, std::int64_t a, std::int64_t b, std::string detail) {
    std::lock_guard lk(mu_);
    Event e;
    e.t = std::chrono::duration<double>(std::chrono::steady_clock::now() - origin_).count();
    e.kind = std::move(kind);
    e.worker = worker;
    e.a = a;
    e.b = b;
    e.detail = std::move(detail);
    if (file_) {
        nlohmann::json j{{"t", e.t}, {"kind", e.kind}, {"worker", e.worker}, {"a", e.a}, {"b", e.b}};
        if (!e.detail.empty()) j["detail"] = e.detail;
        auto line = j.dump() + "\n";
        std::fwrite(line.data(), 1, line.size(), file_);
        std::fflush(file_);
    }
    events_.push_back(std::move(e));
}

std::vector<EventLog::Event> EventLog::events() const {
    std::lock_guard lk(mu_);
    return events_;
}

std::vector<EventLog::Event> EventLog::of_kind(std::string_view kind) const {
    std::lock_guard lk(mu_);
    std::vector<Event> out;
    for (const auto& e : events_) {
        if (e.kind == kind) out.push_back(e);
    }
    return out;
}

Coordination BenchConfig::effective_coordination() const {
    if (coordination) return *coordination;
    return backend == Backend::embedded ? Coordination::locks : Coordination::polling;
}

void BenchConfig::validate() const {
    if (workers < 1) throw UsageError("need at least one worker");
    if (limit < 1) throw UsageError("limit must be at least 1");
    if (block_size < 1) throw UsageError("block size must be at least 1");
    if (!(poll_interval > 0) || poll_interval > 60) throw UsageError("poll interval must be in (0, 60] seconds");
    if (retry_limit < 1) throw UsageError("retry limit must be at least 1");
    if (effective_coordination() == Coordination::locks && backend != Backend::embedded) {
        throw UsageError("lock coordination needs the embedded backend; use --coordination polling");
    }
}

namespace {

class EmbeddedFactory final : public SessionFactory {
public:
    explicit EmbeddedFactory(EmbeddedStore& store) : store_(store) {}
    std::unique_ptr<Session> open() override { return std::make_unique<EmbeddedSession>(store_); }

private:
    EmbeddedStore& store_;
};

class RespFactory final : public SessionFactory {
public:
    explicit RespFactory(Address addr) : addr_(std::move(addr)) {}
    std::unique_ptr<Session> open() override { return std::make_unique<RespSession>(addr_); }

private:
    Address addr_;
};

const NodeHandle& node(const char* name) {
    // A handful of fixed names; handles are cheap to keep around.
    thread_local std::unordered_map<std::string, NodeHandle> cache;
    auto it = cache.find(name);
    if (it == cache.end()) it = cache.emplace(name, NodeHandle(name)).first;
    return it->second;
}

void pause(double seconds) {
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

// Failure and abort state shared by the parent and its workers.
struct RunState {
    std::atomic<bool> failed{false};
    std::atomic<bool> aborting{false};
    std::mutex mu;
    std::exception_ptr first_error;
    int failed_worker = 0;

    void fail(int worker, std::exception_ptr e) {
        std::lock_guard lk(mu);
        if (!first_error) {
            first_error = std::move(e);
            failed_worker = worker;
        }
        failed = true;
    }
};

struct WorkerArgs {
    int pid;
    Coordination coordination;
    double poll_interval;
    RecordStyle style;
    const std::function<void(std::uint64_t, SequenceContext&)>* body;
    EventLog* log;
    RunState* state;
};

void worker_main(const WorkerArgs& w, std::unique_ptr<Session> db) {
    AccessCounters counters;
    SequenceContext ctx(*db, counters, w.style);
    const NodeHandle finished_me = NodeHandle("finished", {w.pid});
    const NodeHandle trigger_me = NodeHandle("trigger", {w.pid});
    const NodeHandle worker_me = NodeHandle("worker", {w.pid});

    if (w.coordination == Coordination::locks) {
        db->grab(finished_me);
        db->incr(node("queued"), -1);
        if (w.log) w.log->add("worker_ready", w.pid);
        db->grab(trigger_me);
        db->release(trigger_me);
    } else {
        db->set(worker_me, "1");
        db->incr(node("queued"), -1);
        if (w.log) w.log->add("worker_ready", w.pid);
        while (db->get_or(node("trigger"), "") != "1") {
            if (w.state->aborting) return;
            if (w.log) w.log->add("poll", w.pid, 0, 0, "trigger");
            pause(w.poll_interval);
        }
    }
    if (w.state->aborting) return;
    if (w.log) w.log->add("worker_started", w.pid);

    next_block(ctx, w.pid, w.log, *w.body);

    db->incr(node("reads"), static_cast<std::int64_t>(counters.reads));
    db->incr(node("updates"), static_cast<std::int64_t>(counters.updates));
    if (w.log) {
        w.log->add("worker_counts", w.pid, static_cast<std::int64_t>(counters.reads),
                   static_cast<std::int64_t>(counters.updates));
        if (ctx.record_attempts > ctx.record_updates) {
            w.log->add("retries", w.pid, static_cast<std::int64_t>(ctx.record_attempts - ctx.record_updates),
                       static_cast<std::int64_t>(ctx.record_updates));
        }
        w.log->add("worker_finished", w.pid);
    }
    if (w.coordination == Coordination::locks) {
        db->release(finished_me);
    } else {
        db->delete_tree(worker_me);
    }
}

}  // namespace

std::unique_ptr<SessionFactory> embedded_sessions(EmbeddedStore& store) {
    return std::make_unique<EmbeddedFactory>(store);
}

std::unique_ptr<SessionFactory> resp_sessions(const Address& addr) {
    return std::make_unique<RespFactory>(addr);
}

const std::vector<std::string>& benchmark_nodes() {
    static const std::vector<std::string> names{"step",  "longest", "highest", "blocks", "trigger",
                                                "queued", "worker", "reads",   "updates"};
    return names;
}

void ensure_fresh(Session& s, bool force) {
    if (force) s.flush_all();
    std::vector<std::string> present;
    for (const auto& name : benchmark_nodes()) {
        NodeHandle h(name);
        bool exists = false;
        try {
            exists = s.get(h).has_value() || s.subtree_size(h) > 0;
        } catch (const StoreError&) {
            exists = true;  // e.g. a real server answering WRONGTYPE
        }
        if (exists) present.push_back(name);
    }
    if (!present.empty()) {
        std::string list;
        for (const auto& p : present) list += (list.empty() ? "" : ", ") + p;
        throw StoreError("the store already holds benchmark data (" + list + "); rerun with --force-flush to clear it");
    }
}

void store_blocks(Session& s, const BlockSpec& blocks) {
    Session::Entries entries;
    for (std::size_t i = 0; i < blocks.boundaries.size(); ++i) {
        entries.emplace(std::to_string(i + 1), std::to_string(blocks.boundaries[i]));
    }
    s.set_tree(node("blocks"), entries);
}

void next_block(SequenceContext& ctx, int worker, EventLog* log,
                const std::function<void(std::uint64_t, SequenceContext&)>& body) {
    Session& db = ctx.db;
    const NodeHandle& blocks = node("blocks");
    const bool nested = db.max_subscripts() >= 2;
    for (std::uint64_t index = 1;; ++index) {
        auto upper = db.get(blocks.child(index + 1));
        if (!upper) break;
        NodeHandle marker = nested ? NodeHandle("blocks", {Subscript(index), Subscript("taken")})
                                   : blocks.child(std::to_string(index) + "-taken");
        if (db.incr(marker, 1) != 1) continue;
        auto lower = db.get(blocks.child(index));
        if (!lower) throw StoreError("block boundary " + std::to_string(index) + " is missing");
        std::uint64_t first = parse_unsigned(*lower) + 1;
        std::uint64_t last = parse_unsigned(*upper);
        if (log) {
            log->add("claim", worker, static_cast<std::int64_t>(first), static_cast<std::int64_t>(last),
                     std::to_string(index));
        }
        for (std::uint64_t n = first; n <= last; ++n) {
            if (body) {
                body(n, ctx);
            } else {
                sequence(n, ctx);
            }
        }
    }
}

BenchReport run_bench(const BenchConfig& config, SessionFactory& sessions) {
    config.validate();
    const Coordination co = config.effective_coordination();
    const BlockSpec blocks = make_blocks(config.limit, config.block_size);
    EventLog* log = config.event_log;

    auto parent = sessions.open();
    parent->set_retry_limit(config.retry_limit);
    ensure_fresh(*parent, config.force_flush);
    if (co == Coordination::locks && !parent->supports_locks()) {
        throw UsageError(std::string(parent->backend_name()) + " backend has no locks; use polling coordination");
    }
    const RecordStyle style = config.record_style.value_or(default_record_style(*parent));

    std::vector<std::unique_ptr<Session>> worker_sessions;
    for (unsigned i = 0; i < config.workers; ++i) {
        worker_sessions.push_back(sessions.open());
        worker_sessions.back()->set_retry_limit(config.retry_limit);
    }

    store_blocks(*parent, blocks);
    if (co == Coordination::locks) {
        parent->grab(node("trigger"));
    } else {
        parent->set(node("trigger"), "0");
    }
    parent->set(node("queued"), std::to_string(config.workers));
    if (co == Coordination::polling) parent->delete_tree(node("worker"));
    if (log) log->add("barrier_armed", 0, config.workers);

    RunState state;
    std::vector<std::thread> threads;
    threads.reserve(config.workers);
    for (unsigned i = 0; i < config.workers; ++i) {
        WorkerArgs w{static_cast<int>(i + 1), co, config.poll_interval, style, &config.sequence_fn, log, &state};
        threads.emplace_back([w, db = std::move(worker_sessions[i])]() mutable {
            try {
                worker_main(w, std::move(db));
            } catch (...) {
                db.reset();
                w.state->fail(w.pid, std::current_exception());
                if (w.log) w.log->add("worker_failed", w.pid);
            }
        });
    }

    auto abort_run = [&] {
        state.aborting = true;
        try {
            if (co == Coordination::locks) {
                parent->release(node("trigger"));
            } else {
                parent->set(node("trigger"), "1");
            }
        } catch (const Error&) {
        }
        for (auto& t : threads) t.join();
    };

    double elapsed = 0;
    try {
        while (parent->get_or(node("queued"), "") != "0") {
            if (state.failed) break;
            if (log) log->add("poll", 0, 0, 0, "queued");
            pause(config.poll_interval);
        }
        if (!state.failed) {
            std::chrono::steady_clock::time_point start;
            if (co == Coordination::locks) {
                if (log) log->add("barrier_released", 0);
                parent->release(node("trigger"));
                start = std::chrono::steady_clock::now();
                parent->grab(node("finished"));
                parent->release(node("finished"));
            } else {
                if (log) log->add("barrier_released", 0);
                parent->set(node("trigger"), "1");
                start = std::chrono::steady_clock::now();
                while (parent->subtree_size(node("worker")) != 0) {
                    if (state.failed) break;
                    if (log) log->add("poll", 0, 0, 0, "worker");
                    pause(config.poll_interval);
                }
            }
            elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            if (log) log->add("all_finished", 0);
        }
    } catch (...) {
        abort_run();
        throw;
    }
    if (state.failed) {
        abort_run();
        std::rethrow_exception(state.first_error);
    }
    for (auto& t : threads) t.join();
    if (state.failed) std::rethrow_exception(state.first_error);

    BenchReport r;
    r.backend = std::string(parent->backend_name());
    r.coordination = std::string(to_string(co));
    r.workers = config.workers;
    r.limit = config.limit;
    r.block_size = config.block_size;
    r.longest = parse_unsigned(parent->get_or(node("longest"), "0"));
    r.highest = parse_unsigned(parent->get_or(node("highest"), "0"));
    r.reads = parse_unsigned(parent->get_or(node("reads"), "0"));
    r.updates = parse_unsigned(parent->get_or(node("updates"), "0"));
    r.elapsed_s = elapsed;
    return r;
}

VerifyResult replay_steps(Session& s) {
    VerifyResult v;
    for (const auto& [key, value] : s.children(node("step"))) {
        ++v.entries_checked;
        std::uint64_t k = 0, steps = 0;
        try {
            k = parse_unsigned(key);
            steps = parse_unsigned(value);
        } catch (const StoreError&) {
            v.ok = false;
            v.problems.push_back("step(" + key + ") = \"" + value + "\" is not numeric");
            continue;
        }
        // Apply next_term `steps` times; 1 must be reached exactly at the end.
        std::uint64_t n = k, i = 0;
        for (; i < steps && n != 1; ++i) n = next_term(n);
        if (n != 1 || i != steps) {
            v.ok = false;
            v.problems.push_back("step(" + key + ") = " + value + " but the true step count is " +
                                 std::to_string(stopping_time(k)));
        }
    }
    return v;
}

VerifyResult verify_run(Session& s, const BenchReport& report) {
    auto expected = oracle(report.limit);
    VerifyResult v = replay_steps(s);
    if (report.longest != expected.longest) {
        v.ok = false;
        v.problems.push_back("longest = " + std::to_string(report.longest) + ", oracle says " +
                             std::to_string(expected.longest));
    }
    if (report.highest != expected.highest) {
        v.ok = false;
        v.problems.push_back("highest = " + std::to_string(report.highest) + ", oracle says " +
                             std::to_string(expected.highest));
    }
    if (v.entries_checked != expected.steps.size()) {
        v.ok = false;
        v.problems.push_back("step table holds " + std::to_string(v.entries_checked) + " entries, oracle expects " +
                             std::to_string(expected.steps.size()));
    }
    return v;
}

}  // namespace threen1
