#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "threen1/collatz.hpp"
#include "threen1/embedded_store.hpp"
#include "threen1/net.hpp"
#include "threen1/store.hpp"

namespace threen1 {

enum class Backend { embedded, resp };
enum class Coordination { locks, polling };

std::string_view to_string(Backend b);
std::string_view to_string(Coordination c);
Backend parse_backend(std::string_view s);
Coordination parse_coordination(std::string_view s);

// Block i (1-based) covers starts boundaries[i-1]+1 .. boundaries[i].
struct BlockSpec {
    std::vector<std::uint64_t> boundaries;

    std::size_t blocks() const noexcept { return boundaries.empty() ? 0 : boundaries.size() - 1; }
    std::uint64_t limit() const noexcept { return boundaries.empty() ? 0 : boundaries.back(); }
};

BlockSpec make_blocks(std::uint64_t x, std::uint64_t block_size);

// In-memory record of coordination events; optionally mirrored to a JSON-lines
// file. Safe to share between workers.
class EventLog {
public:
    struct Event {
        double t = 0;       // seconds since the log was created
        std::string kind;   // claim, poll, barrier_armed, barrier_released, worker_started, worker_finished, ...
        int worker = 0;     // 0 for the parent
        std::int64_t a = 0;
        std::int64_t b = 0;
        std::string detail;
    };

    EventLog() = default;
    explicit EventLog(const std::string& path);
    ~EventLog();
    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    void add(std::string kind, int worker, std::int64_t a = 0, std::int64_t b = 0, std::string detail = {});
    std::vector<Event> events() const;
    std::vector<Event> of_kind(std::string_view kind) const;

private:
    mutable std::mutex mu_;
    std::chrono::steady_clock::time_point origin_ = std::chrono::steady_clock::now();
    std::vector<Event> events_;
    std::FILE* file_ = nullptr;
};

struct BenchConfig {
    Backend backend = Backend::embedded;
    Address addr;
    unsigned workers = 1;
    std::uint64_t limit = 100'000;
    std::uint64_t block_size = 1'000;
    std::optional<Coordination> coordination;  // unset: locks on embedded, polling on resp
    double poll_interval = 0.1;                // seconds
    unsigned retry_limit = 10'000;
    bool force_flush = false;
    std::optional<RecordStyle> record_style;   // unset: per backend

    // Test hooks. sequence_fn replaces the per-start body; event_log receives
    // coordination events.
    std::function<void(std::uint64_t start, SequenceContext& ctx)> sequence_fn;
    EventLog* event_log = nullptr;

    Coordination effective_coordination() const;
    // UsageError on an invalid combination.
    void validate() const;
};

struct BenchReport {
    std::string backend;
    std::string coordination;
    unsigned workers = 0;
    std::uint64_t limit = 0;
    std::uint64_t block_size = 0;
    std::uint64_t longest = 0;
    std::uint64_t highest = 0;
    std::uint64_t reads = 0;
    std::uint64_t updates = 0;
    double elapsed_s = 0;

    friend bool operator==(const BenchReport&, const BenchReport&) = default;
};

// Opens one worker session on the configured backend.
class SessionFactory {
public:
    virtual ~SessionFactory() = default;
    virtual std::unique_ptr<Session> open() = 0;
};

// Sessions on an in-process store, or fresh connections to a RESP server.
std::unique_ptr<SessionFactory> embedded_sessions(EmbeddedStore& store);
std::unique_ptr<SessionFactory> resp_sessions(const Address& addr);

// Names of every node the benchmark writes.
const std::vector<std::string>& benchmark_nodes();

// Throws StoreError if any benchmark node already holds data, after flushing
// everything first when force is set.
void ensure_fresh(Session& s, bool force);

// Stores the blocks as blocks[1..k+1] the way the workers expect them.
void store_blocks(Session& s, const BlockSpec& blocks);

// Claims and computes every block still free. Block claims are unmetered.
void next_block(SequenceContext& ctx, int worker, EventLog* log,
                const std::function<void(std::uint64_t, SequenceContext&)>& body);

// Runs the whole benchmark: stores blocks, starts config.workers workers behind
// a start barrier, times them and collects the totals.
BenchReport run_bench(const BenchConfig& config, SessionFactory& sessions);

struct VerifyResult {
    bool ok = true;
    std::vector<std::string> problems;
    std::uint64_t entries_checked = 0;
};

// Checks a finished run: longest/highest against the oracle, and every stored
// step[k]=s takes k to 1 in exactly s applications of next_term.
VerifyResult verify_run(Session& s, const BenchReport& report);

// Just the step-table replay.
VerifyResult replay_steps(Session& s);

}  // namespace threen1
