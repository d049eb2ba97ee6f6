#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "threen1/key.hpp"

namespace threen1 {

// Per-worker tallies of metered store traffic. Owned by exactly one worker.
struct AccessCounters {
    std::uint64_t reads = 0;
    std::uint64_t updates = 0;
};

struct TxnStats {
    std::uint64_t transactions = 0;
    std::uint64_t attempts = 0;  // total body executions, including retries
    unsigned last_attempts = 0;
};

// The node operations available both on a session and inside a transaction.
class KeyValueOps {
public:
    virtual ~KeyValueOps() = default;

    virtual std::optional<std::string> get(const NodeHandle& h) = 0;
    virtual void set(const NodeHandle& h, std::string_view value) = 0;
    // Atomic read-modify-write; an absent node counts as 0. Returns the new value.
    virtual std::int64_t incr(const NodeHandle& h, std::int64_t delta) = 0;

    std::string get_or(const NodeHandle& h, std::string_view fallback) {
        auto v = get(h);
        return v ? std::move(*v) : std::string(fallback);
    }
};

// One worker's connection to a backend. Sessions are not shared between
// threads; the backend behind them is.
class Session : public KeyValueOps {
public:
    using Entries = std::map<std::string, std::string>;
    using Timeout = std::optional<std::chrono::milliseconds>;  // nullopt waits forever

    virtual void delete_tree(const NodeHandle& h) = 0;
    virtual void set_tree(const NodeHandle& h, const Entries& entries) = 0;
    // Number of immediate children of h holding a value.
    virtual std::size_t subtree_size(const NodeHandle& h) = 0;
    // Immediate children of h holding a value, in no particular order.
    virtual std::vector<std::pair<std::string, std::string>> children(const NodeHandle& h) = 0;

    // Explicit optimistic transaction protocol: watch, queue writes after
    // multi(), and exec() applies them iff no watched node changed.
    virtual void watch(std::span<const NodeHandle> nodes) = 0;
    virtual void unwatch() = 0;
    virtual void multi() = 0;
    virtual bool exec() = 0;
    virtual void discard() = 0;
    bool in_multi() const noexcept { return in_multi_; }

    // Restartable transaction: body may run several times and must only
    // touch the store through the view it is given.
    template <class F>
    auto transaction(F&& body) -> std::invoke_result_t<F&, KeyValueOps&>;

    virtual bool supports_locks() const { return false; }
    virtual bool grab(const NodeHandle& lock, Timeout timeout = std::nullopt);
    virtual void release(const NodeHandle& lock);

    // Deepest subscript count the backend can address.
    virtual std::size_t max_subscripts() const = 0;
    virtual void flush_all() = 0;
    virtual std::string_view backend_name() const = 0;

    void set_retry_limit(unsigned limit) noexcept { retry_limit_ = limit; }
    unsigned retry_limit() const noexcept { return retry_limit_; }
    const TxnStats& txn_stats() const noexcept { return stats_; }

protected:
    using Body = std::function<void(KeyValueOps&)>;
    virtual void run_transaction(const Body& body) = 0;

    TxnStats stats_;
    unsigned retry_limit_ = 10'000;
    bool in_multi_ = false;
};

template <class F>
auto Session::transaction(F&& body) -> std::invoke_result_t<F&, KeyValueOps&> {
    using R = std::invoke_result_t<F&, KeyValueOps&>;
    if constexpr (std::is_void_v<R>) {
        run_transaction([&](KeyValueOps& tx) { body(tx); });
    } else {
        std::optional<R> out;
        run_transaction([&](KeyValueOps& tx) { out.emplace(body(tx)); });
        return std::move(*out);
    }
}

// A handle whose get/set/incr also bump a worker's counters: get counts as a
// read, set and incr as updates. Works against a session or a transaction view.
class MeteredNode {
public:
    MeteredNode(NodeHandle handle, AccessCounters& counters)
        : handle_(std::move(handle)), counters_(&counters) {}

    std::optional<std::string> get(KeyValueOps& db) const {
        ++counters_->reads;
        return db.get(handle_);
    }
    std::string get_or(KeyValueOps& db, std::string_view fallback) const {
        ++counters_->reads;
        return db.get_or(handle_, fallback);
    }
    void set(KeyValueOps& db, std::string_view value) const {
        ++counters_->updates;
        db.set(handle_, value);
    }
    std::int64_t incr(KeyValueOps& db, std::int64_t delta) const {
        ++counters_->updates;
        return db.incr(handle_, delta);
    }

    MeteredNode child(const Subscript& s) const { return {handle_.child(s), *counters_}; }
    const NodeHandle& handle() const noexcept { return handle_; }
    AccessCounters& counters() const noexcept { return *counters_; }

private:
    NodeHandle handle_;
    AccessCounters* counters_;
};

inline MeteredNode metered(NodeHandle h, AccessCounters& counters) {
    return {std::move(h), counters};
}

// Strict decimal parsing of stored integers; StoreError on anything else.
std::int64_t parse_integer(std::string_view text);
std::uint64_t parse_unsigned(std::string_view text);

// Retry pacing for optimistic loops: no wait for the first attempts, then a
// short randomized yield.
void retry_backoff(unsigned attempt);

void check_value_size(std::string_view value);

}  // namespace threen1
