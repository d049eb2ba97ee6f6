#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "threen1/embedded_store.hpp"
#include "threen1/resp_server.hpp"

namespace testing {

// An embedded store served over loopback on an ephemeral port.
struct LoopbackServer {
    threen1::EmbeddedStore store;
    threen1::RespServer server{store, threen1::Address{"127.0.0.1", 0}};

    LoopbackServer() { server.start(); }
    ~LoopbackServer() { server.stop(); }
    threen1::Address addr() const { return server.address(); }
};

// Straight transcription of the reference sequence routine over plain maps,
// counting every access the way the metering wrappers do. Kept separate from
// the library so the two can disagree.
struct CountingOracle {
    std::map<std::uint64_t, std::uint64_t> step;
    std::optional<std::uint64_t> longest, highest;
    std::uint64_t reads = 0, updates = 0;

    std::optional<std::uint64_t> hget(std::uint64_t n) {
        ++reads;
        auto it = step.find(n);
        if (it == step.end()) return std::nullopt;
        return it->second;
    }

    void sequence(std::uint64_t n) {
        std::uint64_t steps = 0, peak = 0;
        std::vector<std::uint64_t> path;
        while (!hget(n) && n > 1) {
            path.push_back(n);
            n = n % 2 ? 3 * n + 1 : n / 2;
            if (n > peak) peak = n;
            ++steps;
        }
        if (steps == 0) return;
        if (n > 1) steps += *hget(n);
        ++reads;
        if (steps > longest.value_or(0)) {
            longest = steps;
            ++updates;
        }
        ++reads;
        if (peak > highest.value_or(0)) {
            highest = peak;
            ++updates;
        }
        for (std::size_t i = 0; i < path.size(); ++i) {
            step[path[i]] = steps - i;
            ++updates;
        }
    }

    void run(std::uint64_t x) {
        for (std::uint64_t n = 1; n <= x; ++n) sequence(n);
    }
};

}  // namespace testing
