#include "threen1/collatz.hpp"

#include <array>
#include <string>

#include "threen1/error.hpp"

namespace threen1 {

std::uint64_t next_term(std::uint64_t n) {
    if (n % 2 == 0) return n / 2;
    std::uint64_t out = 0;
    if (__builtin_mul_overflow(n, std::uint64_t{3}, &out) || __builtin_add_overflow(out, std::uint64_t{1}, &out)) {
        throw OverflowError("3n+1 overflows 64 bits at n=" + std::to_string(n));
    }
    return out;
}

SequenceContext::SequenceContext(Session& session, AccessCounters& counters, RecordStyle style_)
    : db(session),
      style(style_),
      step(NodeHandle("step"), counters),
      longest(NodeHandle("longest"), counters),
      highest(NodeHandle("highest"), counters) {}

RecordStyle default_record_style(const Session& s) {
    return s.backend_name() == "resp" ? RecordStyle::watch_loop : RecordStyle::restartable;
}

void sequence(std::uint64_t start, SequenceContext& ctx) {
    auto& path = ctx.path;
    path.clear();
    std::uint64_t n = start;
    std::uint64_t steps = 0, peak = 0;
    // The probe runs before the n>1 test, so step[1] is read too.
    while (!ctx.step.child(n).get(ctx.db) && n > 1) {
        path.push_back(n);
        n = next_term(n);
        if (n > peak) peak = n;
        ++steps;
    }
    if (steps == 0) return;
    // Re-reads the junction value the loop just saw.
    if (n > 1) {
        auto tail = ctx.step.child(n).get(ctx.db);
        if (!tail) throw StoreError("step(" + std::to_string(n) + ") vanished during a walk");
        steps += parse_unsigned(*tail);
    }
    ++ctx.record_updates;
    ctx.record_attempts += update_records(ctx, steps, peak);
    for (std::size_t i = 0; i < path.size(); ++i) {
        ctx.step.child(path[i]).set(ctx.db, std::to_string(steps - i));
    }
}

unsigned update_records(SequenceContext& ctx, std::uint64_t steps, std::uint64_t peak) {
    switch (ctx.style) {
        case RecordStyle::restartable:
            return update_records_txn(ctx.db, ctx.longest, ctx.highest, steps, peak);
        case RecordStyle::watch_loop:
            return update_records_watch_loop(ctx.db, ctx.longest, ctx.highest, steps, peak);
        case RecordStyle::unprotected:
            return update_records_unprotected(ctx.db, ctx.longest, ctx.highest, steps, peak);
    }
    return 0;
}

unsigned update_records_txn(Session& db, const MeteredNode& longest, const MeteredNode& highest,
                            std::uint64_t steps, std::uint64_t peak) {
    db.transaction([&](KeyValueOps& tx) {
        if (steps > parse_unsigned(longest.get_or(tx, "0"))) longest.set(tx, std::to_string(steps));
        if (peak > parse_unsigned(highest.get_or(tx, "0"))) highest.set(tx, std::to_string(peak));
    });
    return db.txn_stats().last_attempts;
}

unsigned update_records_watch_loop(Session& db, const MeteredNode& longest, const MeteredNode& highest,
                                   std::uint64_t steps, std::uint64_t peak) {
    const std::array<NodeHandle, 2> watched{longest.handle(), highest.handle()};
    for (unsigned attempt = 1;; ++attempt) {
        db.watch(watched);
        std::uint64_t db_longest = 0, db_highest = 0;
        try {
            db_longest = parse_unsigned(longest.get_or(db, "0"));
            db_highest = parse_unsigned(highest.get_or(db, "0"));
        } catch (...) {
            db.unwatch();
            throw;
        }
        db.multi();
        try {
            if (steps > db_longest) longest.set(db, std::to_string(steps));
            if (peak > db_highest) highest.set(db, std::to_string(peak));
        } catch (...) {
            db.discard();
            throw;
        }
        if (db.exec()) return attempt;
        if (attempt >= db.retry_limit()) {
            throw RetryLimitError("record update gave up after " + std::to_string(attempt) + " conflicting attempts",
                                  attempt);
        }
        retry_backoff(attempt);
    }
}

unsigned update_records_unprotected(Session& db, const MeteredNode& longest, const MeteredNode& highest,
                                    std::uint64_t steps, std::uint64_t peak) {
    if (steps > parse_unsigned(longest.get_or(db, "0"))) longest.set(db, std::to_string(steps));
    if (peak > parse_unsigned(highest.get_or(db, "0"))) highest.set(db, std::to_string(peak));
    return 1;
}

OracleResult oracle(std::uint64_t x) {
    OracleResult r;
    std::vector<std::uint64_t> path;
    for (std::uint64_t start = 1; start <= x; ++start) {
        path.clear();
        std::uint64_t n = start, peak = 0;
        while (n > 1 && !r.steps.count(n)) {
            path.push_back(n);
            n = next_term(n);
            peak = std::max(peak, n);
        }
        if (path.empty()) continue;
        std::uint64_t total = path.size() + (n > 1 ? r.steps.at(n) : 0);
        r.longest = std::max(r.longest, total);
        r.highest = std::max(r.highest, peak);
        for (std::size_t i = 0; i < path.size(); ++i) r.steps.emplace(path[i], total - i);
    }
    return r;
}

std::uint64_t stopping_time(std::uint64_t k) {
    std::uint64_t s = 0;
    for (; k > 1; k = next_term(k)) ++s;
    return s;
}

}  // namespace threen1
