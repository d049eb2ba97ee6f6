#include <doctest.h>

#include <atomic>
#include <chrono>
#include <mutex>
#include <random>
#include <thread>

#include "threen1/embedded_store.hpp"
#include "threen1/error.hpp"
#include "threen1/lock_table.hpp"

using namespace threen1;
using namespace std::chrono_literals;

namespace {

void wait_for_waiters(const LockTable& t, std::size_t n) {
    auto deadline = std::chrono::steady_clock::now() + 5s;
    while (t.waiting() < n) {
        REQUIRE(std::chrono::steady_clock::now() < deadline);
        std::this_thread::sleep_for(1ms);
    }
}

// Ordered record of what happened, shared by test threads.
struct Trace {
    std::mutex mu;
    std::vector<std::string> steps;
    void add(std::string s) {
        std::lock_guard lk(mu);
        steps.push_back(std::move(s));
    }
};

}  // namespace

TEST_CASE("uncontended grab succeeds at once") {
    LockTable t;
    CHECK(t.grab(NodeHandle("x"), 1, 0ms));
    CHECK(t.held().size() == 1);
    t.release(NodeHandle("x"), 1);
    CHECK(t.held().empty());
}

TEST_CASE("a held parent blocks a child grab until release") {
    LockTable t;
    Trace trace;
    NodeHandle trigger("trigger");
    REQUIRE(t.grab(trigger, 1, std::nullopt));
    std::thread child([&] {
        t.grab(trigger.child("42"), 2, std::nullopt);
        trace.add("child granted");
        t.release(trigger.child("42"), 2);
    });
    wait_for_waiters(t, 1);
    std::this_thread::sleep_for(20ms);
    trace.add("parent releasing");
    t.release(trigger, 1);
    child.join();
    CHECK(trace.steps == std::vector<std::string>{"parent releasing", "child granted"});
}

TEST_CASE("the parent grabs the bare path only after every child subscript is released") {
    LockTable t;
    Trace trace;
    NodeHandle finished("finished");
    REQUIRE(t.grab(finished.child("a"), 1, std::nullopt));
    REQUIRE(t.grab(finished.child("b"), 2, std::nullopt));
    std::thread parent([&] {
        t.grab(finished, 99, std::nullopt);
        trace.add("parent granted");
        t.release(finished, 99);
    });
    wait_for_waiters(t, 1);
    trace.add("release a");
    t.release(finished.child("a"), 1);
    std::this_thread::sleep_for(30ms);
    CHECK(t.waiting() == 1);  // b still held
    trace.add("release b");
    t.release(finished.child("b"), 2);
    parent.join();
    CHECK(trace.steps == std::vector<std::string>{"release a", "release b", "parent granted"});
}

TEST_CASE("conflict is exactly the prefix relation") {
    LockTable t;
    REQUIRE(t.grab(NodeHandle("a", {"1"}), 1, 0ms));
    CHECK(t.grab(NodeHandle("a", {"12"}), 2, 0ms));      // sibling, not a prefix
    CHECK(t.grab(NodeHandle("ab"), 2, 0ms));             // different varname
    CHECK_FALSE(t.grab(NodeHandle("a"), 3, 0ms));        // ancestor
    CHECK_FALSE(t.grab(NodeHandle("a", {"1", "x"}), 3, 0ms));  // descendant
    CHECK_FALSE(t.grab(NodeHandle("a", {"1"}), 3, 0ms));  // equal
}

TEST_CASE("release and re-grab rules") {
    LockTable t;
    NodeHandle x("x");
    CHECK_THROWS_AS(t.release(x, 1), LockError);
    REQUIRE(t.grab(x, 1, 0ms));
    CHECK(t.grab(x, 1, 0ms));  // idempotent
    CHECK(t.held().size() == 1);
    CHECK_THROWS_AS(t.grab(x.child("y"), 1, 0ms), LockError);
    CHECK_THROWS_AS(t.release(x, 2), LockError);
    t.release(x, 1);
    CHECK(t.grab(x, 2, 0ms));
}

TEST_CASE("grab times out") {
    LockTable t;
    REQUIRE(t.grab(NodeHandle("x"), 1, 0ms));
    auto t0 = std::chrono::steady_clock::now();
    CHECK_FALSE(t.grab(NodeHandle("x"), 2, 50ms));
    CHECK(std::chrono::steady_clock::now() - t0 >= 45ms);
    CHECK(t.waiting() == 0);
}

TEST_CASE("waiters are served first come first served") {
    LockTable t;
    Trace trace;
    NodeHandle x("x");
    REQUIRE(t.grab(x, 1, std::nullopt));
    std::vector<std::thread> ts;
    for (int i = 2; i <= 5; ++i) {
        ts.emplace_back([&, i] {
            // Waiter 3 wants only a child; it still queues behind waiter 2.
            NodeHandle want = i == 3 ? x.child("c") : x;
            t.grab(want, static_cast<OwnerId>(i), std::nullopt);
            trace.add(std::to_string(i));
            std::this_thread::sleep_for(5ms);
            t.release(want, static_cast<OwnerId>(i));
        });
        wait_for_waiters(t, static_cast<std::size_t>(i - 1));
    }
    t.release(x, 1);
    for (auto& th : ts) th.join();
    CHECK(trace.steps == std::vector<std::string>{"2", "3", "4", "5"});
}

TEST_CASE("100 contenders on one path all get their turn") {
    LockTable t;
    std::atomic<int> done{0};
    std::vector<std::thread> ts;
    for (int i = 0; i < 100; ++i) {
        ts.emplace_back([&, i] {
            for (int round = 0; round < 5; ++round) {
                REQUIRE(t.grab(NodeHandle("hot"), static_cast<OwnerId>(i + 1), 10s));
                t.release(NodeHandle("hot"), static_cast<OwnerId>(i + 1));
            }
            ++done;
        });
    }
    for (auto& th : ts) th.join();
    CHECK(done == 100);
}

TEST_CASE("held locks never conflict (observer checker)") {
    LockTable t;
    std::atomic<int> violations{0};
    std::atomic<int> observations{0};
    t.set_observer([&](const std::vector<LockTable::Held>& held) {
        ++observations;
        for (std::size_t i = 0; i < held.size(); ++i) {
            for (std::size_t j = i + 1; j < held.size(); ++j) {
                const auto& a = held[i].path;
                const auto& b = held[j].path;
                if (a.starts_with(b) || b.starts_with(a)) ++violations;
            }
        }
    });
    std::vector<std::thread> ts;
    for (int w = 1; w <= 8; ++w) {
        ts.emplace_back([&, w] {
            std::mt19937 rng(static_cast<unsigned>(w));
            for (int i = 0; i < 300; ++i) {
                NodeHandle h("r");
                int depth = static_cast<int>(rng() % 3);
                for (int d = 0; d < depth; ++d) h = h.child(static_cast<int>(rng() % 2));
                if (t.grab(h, static_cast<OwnerId>(w), 200ms)) {
                    if (rng() % 4 == 0) std::this_thread::yield();
                    t.release(h, static_cast<OwnerId>(w));
                }
            }
        });
    }
    for (auto& th : ts) th.join();
    CHECK(violations == 0);
    CHECK(observations > 100);
}

TEST_CASE("a session that dies abnormally releases its locks within 100 ms") {
    EmbeddedStore store;
    std::atomic<bool> holding{false};
    std::chrono::steady_clock::time_point died;
    std::thread worker([&] {
        try {
            EmbeddedSession s(store);
            s.grab(NodeHandle("finished", {7}));
            s.grab(NodeHandle("trigger", {7}));
            s.grab(NodeHandle("other"));
            holding = true;
            throw std::runtime_error("worker crashed");
        } catch (const std::runtime_error&) {
            died = std::chrono::steady_clock::now();
        }
    });
    EmbeddedSession parent(store);
    while (!holding) std::this_thread::yield();
    bool got = parent.grab(NodeHandle("finished"), 100ms);
    worker.join();
    CHECK(got);
    CHECK(parent.grab(NodeHandle("trigger"), 100ms));
    CHECK(parent.grab(NodeHandle("other"), 100ms));
    CHECK(store.locks().held().size() == 3);
}

TEST_CASE("a session destroyed while waiting leaves no waiter behind") {
    EmbeddedStore store;
    EmbeddedSession holder(store);
    REQUIRE(holder.grab(NodeHandle("x")));
    std::thread t([&] {
        EmbeddedSession s(store);
        CHECK_FALSE(s.grab(NodeHandle("x"), 30ms));
    });
    t.join();
    CHECK(store.locks().waiting() == 0);
    holder.release(NodeHandle("x"));
    CHECK(store.locks().held().empty());
}
