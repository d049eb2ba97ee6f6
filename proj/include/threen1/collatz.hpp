#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "threen1/store.hpp"

namespace threen1 {

// 3n+1 for odd n, n/2 for even. Throws OverflowError naming n when 3n+1 does
// not fit in 64 bits.
std::uint64_t next_term(std::uint64_t n);

// How longest/highest are updated after a walk.
enum class RecordStyle {
    restartable,  // Session::transaction with a retried function body
    watch_loop,   // explicit watch / get / multi / set / exec, repeated until exec succeeds
    unprotected,  // plain get then set; loses updates under contention
};

// Per-worker state for sequence(): the session, metered handles on the three
// benchmark nodes and the reusable path buffer.
struct SequenceContext {
    SequenceContext(Session& session, AccessCounters& counters, RecordStyle style);

    Session& db;
    RecordStyle style;
    MeteredNode step;
    MeteredNode longest;
    MeteredNode highest;
    std::vector<std::uint64_t> path;
    std::uint64_t record_updates = 0;   // update_records calls
    std::uint64_t record_attempts = 0;  // including conflict retries
};

// The transaction style that suits a backend: restartable where the backend
// runs function bodies natively, the watch loop over RESP.
RecordStyle default_record_style(const Session& s);

// Walks from start until n reaches 1 or a memoized step[n] is found, then
// records the result. Every access to step, longest and highest is metered.
void sequence(std::uint64_t start, SequenceContext& ctx);

// longest := max(longest, steps), highest := max(highest, peak), absent nodes
// reading as 0 and ties not written. Each returns the number of attempts the
// update took.
unsigned update_records(SequenceContext& ctx, std::uint64_t steps, std::uint64_t peak);
unsigned update_records_txn(Session& db, const MeteredNode& longest, const MeteredNode& highest, std::uint64_t steps,
                        std::uint64_t peak);
unsigned update_records_watch_loop(Session& db, const MeteredNode& longest, const MeteredNode& highest,
                               std::uint64_t steps, std::uint64_t peak);
unsigned update_records_unprotected(Session& db, const MeteredNode& longest, const MeteredNode& highest,
                                std::uint64_t steps, std::uint64_t peak);

struct OracleResult {
    std::uint64_t longest = 0;
    std::uint64_t highest = 0;
    // Every value visited by the walks from 1..x (other than 1), mapped to its
    // step count: exactly the entries a single in-order run would store.
    std::unordered_map<std::uint64_t, std::uint64_t> steps;
};

// Store-free computation of the benchmark's results for starts 1..x.
OracleResult oracle(std::uint64_t x);

// Number of next_term applications taking k to 1, or 0 when k is 1.
std::uint64_t stopping_time(std::uint64_t k);

}  // namespace threen1
