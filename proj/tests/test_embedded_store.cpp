#include <doctest.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <barrier>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "threen1/embedded_store.hpp"
#include "threen1/error.hpp"

using namespace threen1;

TEST_CASE("get, set and defaults") {
    EmbeddedStore store;
    EmbeddedSession s(store);
    NodeHandle longest("longest");
    CHECK(s.get_or(longest, "0") == "0");
    CHECK_FALSE(s.get(longest).has_value());
    s.set(longest, "1");
    CHECK(s.get(longest) == "1");
    s.set(longest, "7");
    CHECK(s.get_or(longest, "0") == "7");
    s.set(longest, "");
    CHECK(s.get(longest) == "");  // empty is a value, not absence
}

TEST_CASE("incr") {
    EmbeddedStore store;
    EmbeddedSession s(store);
    CHECK(s.incr(NodeHandle("blocks", {1, "taken"}), 1) == 1);
    CHECK(s.incr(NodeHandle("blocks", {1, "taken"}), 1) == 2);
    s.set(NodeHandle("queued"), "4");
    CHECK(s.incr(NodeHandle("queued"), -1) == 3);
    CHECK(s.get(NodeHandle("queued")) == "3");
    s.set(NodeHandle("text"), "abc");
    CHECK_THROWS_AS(s.incr(NodeHandle("text"), 1), StoreError);
    CHECK(s.get(NodeHandle("text")) == "abc");
    s.set(NodeHandle("big"), std::to_string(INT64_MAX));
    CHECK_THROWS_AS(s.incr(NodeHandle("big"), 1), StoreError);
    CHECK_THROWS_AS(s.set(NodeHandle("huge"), std::string(kMaxValueBytes + 1, 'x')), UsageError);
}

TEST_CASE("set_tree, subtree_size, children, delete_tree") {
    EmbeddedStore store;
    EmbeddedSession s(store);
    NodeHandle blocks("blocks");
    CHECK(s.subtree_size(blocks) == 0);
    s.set_tree(blocks, {});
    CHECK(store.size() == 0);
    s.set_tree(blocks, {{"1", "0"}, {"2", "10"}, {"3", "20"}, {"4", "30"}, {"5", "40"}});
    CHECK(s.get(blocks.child("2")) == "10");
    CHECK(s.subtree_size(blocks) == 5);
    CHECK_FALSE(s.get(blocks).has_value());

    // Grandchildren and the node's own value do not count as children.
    s.incr(NodeHandle("blocks", {"1", "taken"}), 1);
    s.set(blocks, "self");
    CHECK(s.subtree_size(blocks) == 5);
    s.delete_tree(blocks.child("5"));
    CHECK(s.subtree_size(blocks) == 4);

    auto kids = s.children(blocks);
    std::map<std::string, std::string> m(kids.begin(), kids.end());
    CHECK(m == std::map<std::string, std::string>{{"1", "0"}, {"2", "10"}, {"3", "20"}, {"4", "30"}});

    s.delete_tree(NodeHandle("absent"));
    s.delete_tree(blocks);
    CHECK(s.subtree_size(blocks) == 0);
    CHECK_FALSE(s.get(blocks).has_value());
    CHECK_FALSE(s.get(NodeHandle("blocks", {"1", "taken"})).has_value());
    CHECK(store.size() == 0);

    // A sibling varname sharing a byte prefix is untouched.
    s.set(NodeHandle("blocksX"), "1");
    s.set(NodeHandle("blocks", {"1"}), "1");
    s.delete_tree(blocks);
    CHECK(s.get(NodeHandle("blocksX")) == "1");
}

TEST_CASE("versions strictly increase, including across delete and re-create") {
    EmbeddedStore store;
    NodeHandle k("k");
    CHECK(store.version(k) == 0);
    store.set(k, "a");
    auto v1 = store.version(k);
    store.set(k, "a");
    auto v2 = store.version(k);
    store.erase(k);
    auto v3 = store.version(k);
    store.set(k, "b");
    auto v4 = store.version(k);
    CHECK(v1 < v2);
    CHECK(v2 < v3);
    CHECK(v3 < v4);
    CHECK_FALSE(store.read(NodeHandle("other")).value.has_value());
}

TEST_CASE("metered handles count and otherwise behave like plain ones") {
    EmbeddedStore store;
    EmbeddedSession s(store);
    AccessCounters c;
    auto m = metered(NodeHandle("longest"), c);
    CHECK(m.get_or(s, "0") == "0");
    CHECK(c.reads == 1);
    m.set(s, "5");
    CHECK(m.incr(s, 2) == 7);
    CHECK(m.get(s) == "7");
    CHECK(s.get(NodeHandle("longest")) == "7");
    CHECK(c.reads == 2);
    CHECK(c.updates == 2);
    auto kid = m.child(3);
    CHECK(kid.handle() == NodeHandle("longest", {3}));
    kid.get(s);
    CHECK(c.reads == 3);
}

TEST_CASE("restartable transactions") {
    EmbeddedStore store;
    EmbeddedSession s(store), other(store);
    NodeHandle a("a"), b("b");

    SUBCASE("uncontended commits on the first attempt") {
        s.transaction([&](KeyValueOps& tx) { tx.set(a, tx.get_or(a, "0") + "1"); });
        CHECK(s.txn_stats().last_attempts == 1);
        CHECK(s.get(a) == "01");
    }

    SUBCASE("writes are invisible until commit and reads see own writes") {
        s.transaction([&](KeyValueOps& tx) {
            tx.set(a, "x");
            CHECK(tx.get(a) == "x");
            CHECK_FALSE(other.get(a).has_value());
            CHECK(tx.incr(b, 5) == 5);
            CHECK(tx.incr(b, 1) == 6);
        });
        CHECK(s.get(a) == "x");
        CHECK(s.get(b) == "6");
    }

    SUBCASE("a conflicting write forces a retry and the result is still right") {
        int runs = 0;
        s.set(a, "10");
        s.transaction([&](KeyValueOps& tx) {
            auto v = parse_integer(tx.get_or(a, "0"));
            if (++runs == 1) other.set(a, "20");
            tx.set(a, std::to_string(v + 1));
        });
        CHECK(runs >= 2);
        CHECK(s.txn_stats().last_attempts >= 2);
        CHECK(s.get(a) == "21");
    }

    SUBCASE("read-only bodies do not bump versions") {
        s.set(a, "1");
        auto v = store.version(a);
        s.transaction([&](KeyValueOps& tx) { (void)tx.get(a); });
        CHECK(store.version(a) == v);
    }

    SUBCASE("returns the body's value") {
        int r = s.transaction([&](KeyValueOps& tx) {
            tx.set(a, "9");
            return 42;
        });
        CHECK(r == 42);
    }

    SUBCASE("an exception abandons the attempt") {
        CHECK_THROWS_AS(s.transaction([&](KeyValueOps& tx) {
            tx.set(a, "partial");
            throw StoreError("nope");
        }),
                        StoreError);
        CHECK_FALSE(s.get(a).has_value());
    }

    SUBCASE("retry exhaustion reports the attempt count") {
        s.set_retry_limit(3);
        try {
            s.transaction([&](KeyValueOps& tx) {
                (void)tx.get(a);
                other.incr(a, 1);
                tx.set(b, "x");
            });
            FAIL("expected RetryLimitError");
        } catch (const RetryLimitError& e) {
            CHECK(e.attempts() == 3);
        }
        CHECK_FALSE(s.get(b).has_value());
    }
}

TEST_CASE("explicit watch / multi / exec") {
    EmbeddedStore store;
    EmbeddedSession s(store), other(store);
    NodeHandle k("k");
    std::array<NodeHandle, 1> watched{k};

    SUBCASE("no interference commits") {
        s.watch(watched);
        s.multi();
        s.set(k, "1");
        CHECK_FALSE(store.get(k).has_value());
        CHECK(s.exec());
        CHECK(s.get(k) == "1");
    }
    SUBCASE("another writer between watch and exec aborts") {
        s.watch(watched);
        other.set(k, "theirs");
        s.multi();
        s.set(k, "mine");
        CHECK_FALSE(s.exec());
        CHECK(s.get(k) == "theirs");
    }
    SUBCASE("a write to an unwatched node does not abort") {
        s.watch(watched);
        other.set(NodeHandle("unrelated"), "1");
        other.set(NodeHandle("k", {"child"}), "1");
        s.multi();
        s.set(k, "mine");
        CHECK(s.exec());
    }
    SUBCASE("unwatch forgets") {
        s.watch(watched);
        other.set(k, "theirs");
        s.unwatch();
        s.multi();
        s.set(k, "mine");
        CHECK(s.exec());
        CHECK(s.get(k) == "mine");
    }
    SUBCASE("misuse") {
        CHECK_THROWS_AS(s.exec(), UsageError);
        CHECK_THROWS_AS(s.discard(), UsageError);
        s.multi();
        CHECK_THROWS_AS(s.multi(), UsageError);
        CHECK_THROWS_AS(s.get(k), UsageError);
        CHECK_THROWS_AS(s.watch(watched), UsageError);
        s.set(k, "dropped");
        s.discard();
        CHECK_FALSE(s.get(k).has_value());
    }
}

TEST_CASE("incr is linearizable: 100 single increments return 1..100") {
    EmbeddedStore store;
    NodeHandle k("counter");
    std::vector<std::int64_t> got(100);
    std::barrier sync(100);
    std::vector<std::thread> ts;
    for (int i = 0; i < 100; ++i) {
        ts.emplace_back([&, i] {
            EmbeddedSession s(store);
            sync.arrive_and_wait();
            got[i] = s.incr(k, 1);
        });
    }
    for (auto& t : ts) t.join();
    std::sort(got.begin(), got.end());
    std::vector<std::int64_t> want(100);
    std::iota(want.begin(), want.end(), 1);
    CHECK(got == want);
    CHECK(store.get(k) == "100");
}

TEST_CASE("incr under heavier contention keeps every return value distinct") {
    EmbeddedStore store;
    NodeHandle k("counter");
    constexpr int kThreads = 8, kEach = 5000;
    std::vector<std::vector<std::int64_t>> got(kThreads);
    std::vector<std::thread> ts;
    for (int i = 0; i < kThreads; ++i) {
        ts.emplace_back([&, i] {
            EmbeddedSession s(store);
            for (int j = 0; j < kEach; ++j) {
                got[i].push_back(s.incr(k, 1));
                if (j % 64 == 0) std::this_thread::yield();
            }
        });
    }
    for (auto& t : ts) t.join();
    std::set<std::int64_t> all;
    for (auto& g : got) {
        CHECK(std::is_sorted(g.begin(), g.end()));
        all.insert(g.begin(), g.end());
    }
    CHECK(all.size() == kThreads * kEach);
    CHECK(*all.begin() == 1);
    CHECK(*all.rbegin() == kThreads * kEach);
}

namespace {

// A tiny transaction program: read two keys, then write one or two keys with
// values derived from what was read.
struct Program {
    int id;
    std::array<int, 2> reads;
    std::vector<int> writes;
};

using State = std::map<int, std::int64_t>;

std::int64_t derive(const Program& p, std::int64_t r0, std::int64_t r1, int w) {
    return r0 * 3 + r1 * 7 + p.id * 100 + w;
}

void run_serial(State& st, const Program& p) {
    auto r0 = st[p.reads[0]], r1 = st[p.reads[1]];
    for (int w : p.writes) st[w] = derive(p, r0, r1, w);
}

NodeHandle key_of(int k) {
    return NodeHandle("k", {k});
}

}  // namespace

TEST_CASE("concurrent transactions are serializable (enumeration oracle)") {
    std::mt19937 rng(12345);
    int interleaved = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const int nkeys = 2 + static_cast<int>(rng() % 3);  // 2..4 keys
        const int ntx = 2 + static_cast<int>(rng() % 2);    // 2..3 transactions
        std::vector<Program> progs;
        for (int t = 0; t < ntx; ++t) {
            Program p{t + 1, {static_cast<int>(rng() % nkeys), static_cast<int>(rng() % nkeys)}, {}};
            int nw = 1 + static_cast<int>(rng() % 2);
            for (int w = 0; w < nw; ++w) p.writes.push_back(static_cast<int>(rng() % nkeys));
            progs.push_back(p);
        }
        State initial;
        for (int k = 0; k < nkeys; ++k) initial[k] = static_cast<std::int64_t>(rng() % 10);

        // Every serial order the result may match.
        std::vector<State> serial;
        std::vector<int> order(ntx);
        std::iota(order.begin(), order.end(), 0);
        do {
            State st = initial;
            for (int i : order) run_serial(st, progs[i]);
            serial.push_back(st);
        } while (std::next_permutation(order.begin(), order.end()));

        EmbeddedStore store;
        for (auto [k, v] : initial) store.set(key_of(k), std::to_string(v));
        std::barrier sync(ntx);
        std::atomic<unsigned> attempts{0};
        std::vector<std::thread> ts;
        for (const auto& p : progs) {
            ts.emplace_back([&, p] {
                EmbeddedSession s(store);
                sync.arrive_and_wait();
                s.transaction([&](KeyValueOps& tx) {
                    auto r0 = parse_integer(tx.get_or(key_of(p.reads[0]), "0"));
                    std::this_thread::yield();
                    auto r1 = parse_integer(tx.get_or(key_of(p.reads[1]), "0"));
                    std::this_thread::yield();
                    for (int w : p.writes) tx.set(key_of(w), std::to_string(derive(p, r0, r1, w)));
                });
                attempts += s.txn_stats().last_attempts;
            });
        }
        for (auto& t : ts) t.join();
        if (attempts > static_cast<unsigned>(ntx)) ++interleaved;

        State final;
        for (int k = 0; k < nkeys; ++k) final[k] = parse_integer(*store.get(key_of(k)));
        bool matches = std::find(serial.begin(), serial.end(), final) != serial.end();
        REQUIRE_MESSAGE(matches, "trial " << trial << " reached a state no serial order produces");
    }
    MESSAGE("trials with conflict retries: " << interleaved);
}

TEST_CASE("commit applies all writes or none") {
    EmbeddedStore store;
    NodeHandle a("a"), b("b");
    store.set(a, "1");
    auto va = store.version(a);
    std::vector<EmbeddedStore::ReadStamp> reads{{a, va}};
    std::vector<EmbeddedStore::Write> writes{{EmbeddedStore::Write::Kind::set, b, "x"},
                                             {EmbeddedStore::Write::Kind::incr, a, {}, 5}};
    CHECK(store.commit(reads, writes));
    CHECK(store.get(a) == "6");
    CHECK(store.get(b) == "x");
    // The stamp is now stale.
    std::vector<EmbeddedStore::Write> more{{EmbeddedStore::Write::Kind::set, b, "y"}};
    CHECK_FALSE(store.commit(reads, more));
    CHECK(store.get(b) == "x");
}

TEST_CASE("readers never see half of a multi-cell commit") {
    EmbeddedStore store;
    NodeHandle a("pair", {"a"}), b("pair", {"b"});
    store.set(a, "0");
    store.set(b, "0");
    std::atomic<bool> stop{false};
    std::atomic<int> torn{0};
    std::thread reader([&] {
        EmbeddedSession s(store);
        while (!stop) {
            std::string x, y;
            s.transaction([&](KeyValueOps& tx) {
                x = *tx.get(a);
                y = *tx.get(b);
            });
            if (x != y) ++torn;
        }
    });
    EmbeddedSession w(store);
    for (int i = 1; i <= 3000; ++i) {
        w.transaction([&](KeyValueOps& tx) {
            tx.set(a, std::to_string(i));
            tx.set(b, std::to_string(i));
        });
    }
    stop = true;
    reader.join();
    CHECK(torn == 0);
}
