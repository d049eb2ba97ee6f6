#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "threen1/key.hpp"
#include "threen1/lock_table.hpp"
#include "threen1/store.hpp"

namespace threen1 {

// In-process hierarchical store shared by every session opened on it.
//
// Cells live in hash shards chosen by the hash of the full node path, each
// guarded by its own mutex, so single-node operations only ever take one shard
// lock. Every committed write to a cell stamps it with the next value of its
// shard's clock; cell versions therefore strictly increase and never repeat,
// even across delete and re-create. Deleting a node leaves a valueless
// tombstone that keeps its version.
//
// Operations spanning the hierarchy (delete_tree, subtree_size, children) and
// transaction commits that touch several shards lock the shards they need in
// index order.
class EmbeddedStore {
public:
    static constexpr std::size_t kShards = 64;

    struct Versioned {
        std::optional<std::string> value;
        std::uint64_t version = 0;  // 0: never written
    };

    struct ReadStamp {
        NodeHandle handle;
        std::uint64_t version;
    };

    struct Write {
        enum class Kind { set, incr, erase, touch, delete_tree };
        Kind kind;
        NodeHandle handle;
        std::string value;
        std::int64_t delta = 0;
    };

    class Locked;

    EmbeddedStore() = default;
    EmbeddedStore(const EmbeddedStore&) = delete;
    EmbeddedStore& operator=(const EmbeddedStore&) = delete;

    std::optional<std::string> get(const NodeHandle& h);
    Versioned read(const NodeHandle& h);
    std::uint64_t version(const NodeHandle& h);
    void set(const NodeHandle& h, std::string_view value);
    std::int64_t incr(const NodeHandle& h, std::int64_t delta);
    // Removes just this node's value (descendants stay).
    void erase(const NodeHandle& h);
    void delete_tree(const NodeHandle& h);
    void set_tree(const NodeHandle& h, const Session::Entries& entries);
    std::size_t subtree_size(const NodeHandle& h);
    std::vector<std::pair<std::string, std::string>> children(const NodeHandle& h);
    void clear();
    std::size_t size();  // nodes holding a value

    // Atomically: if every stamp still matches its cell's version, apply the
    // writes in order and return true; otherwise change nothing and return
    // false. Incr failures (non-numeric value) do not roll back the other
    // writes; the first one is rethrown after the batch is applied.
    bool commit(std::span<const ReadStamp> reads, std::span<const Write> writes);

    Locked lock(std::span<const NodeHandle* const> handles);
    Locked lock_all();

    LockTable& locks() noexcept { return locks_; }
    OwnerId new_owner() noexcept { return next_owner_.fetch_add(1) + 1; }

private:
    struct Cell {
        std::string value;
        std::uint64_t version = 0;
        bool present = false;
    };

    struct alignas(64) Shard {
        std::mutex mu;
        std::unordered_map<std::string, Cell> cells;
        // Present cells in this shard, per immediate parent path.
        std::unordered_map<std::string, std::size_t> children;
        // Present cells in this shard, per proper ancestor path.
        std::unordered_map<std::string, std::size_t> descendants;
        std::uint64_t clock = 0;
    };

    Shard& shard_for(const NodeHandle& h) noexcept { return shards_[h.hash() % kShards]; }

    static Versioned read_in(Shard& s, const NodeHandle& h);
    static void put_in(Shard& s, const NodeHandle& h, std::string_view value);
    static std::int64_t incr_in(Shard& s, const NodeHandle& h, std::int64_t delta);
    static void erase_in(Shard& s, const NodeHandle& h, bool keep_tombstone);
    static void touch_in(Shard& s, const NodeHandle& h);
    static void account(Shard& s, std::string_view encoded, int sign);

    // Callers hold every shard lock.
    void delete_tree_all_locked(const NodeHandle& h);
    std::size_t subtree_size_all_locked(const NodeHandle& h);

    std::array<Shard, kShards> shards_;
    LockTable locks_;
    std::atomic<OwnerId> next_owner_{0};
};

// A set of held shard locks plus the node operations that are valid under
// them. Hierarchy-wide operations require lock_all().
class EmbeddedStore::Locked {
public:
    Locked(Locked&&) = default;
    Locked& operator=(Locked&&) = delete;
    ~Locked() = default;

    Versioned read(const NodeHandle& h);
    void set(const NodeHandle& h, std::string_view value);
    std::int64_t incr(const NodeHandle& h, std::int64_t delta);
    void erase(const NodeHandle& h);
    void touch(const NodeHandle& h);
    void delete_tree(const NodeHandle& h);
    std::size_t subtree_size(const NodeHandle& h);
    std::vector<std::pair<std::string, std::string>> children(const NodeHandle& h);
    void clear();

    bool holds_all() const noexcept { return all_; }

private:
    friend class EmbeddedStore;
    Locked(EmbeddedStore& store, std::vector<std::size_t> shards);

    Shard& checked(const NodeHandle& h);
    void require_all(const char* what) const;

    EmbeddedStore* store_;
    std::vector<std::unique_lock<std::mutex>> guards_;
    std::array<bool, kShards> held_{};
    bool all_ = false;
};

// One worker context on an EmbeddedStore. Owns a lock-owner id; every lock it
// holds is released when the session is destroyed, however that happens.
class EmbeddedSession final : public Session {
public:
    explicit EmbeddedSession(EmbeddedStore& store);
    ~EmbeddedSession() override;
    EmbeddedSession(const EmbeddedSession&) = delete;
    EmbeddedSession& operator=(const EmbeddedSession&) = delete;

    std::optional<std::string> get(const NodeHandle& h) override;
    void set(const NodeHandle& h, std::string_view value) override;
    std::int64_t incr(const NodeHandle& h, std::int64_t delta) override;

    void delete_tree(const NodeHandle& h) override;
    void set_tree(const NodeHandle& h, const Entries& entries) override;
    std::size_t subtree_size(const NodeHandle& h) override;
    std::vector<std::pair<std::string, std::string>> children(const NodeHandle& h) override;

    void watch(std::span<const NodeHandle> nodes) override;
    void unwatch() override;
    void multi() override;
    bool exec() override;
    void discard() override;

    bool supports_locks() const override { return true; }
    bool grab(const NodeHandle& lock, Timeout timeout = std::nullopt) override;
    void release(const NodeHandle& lock) override;

    std::size_t max_subscripts() const override { return kMaxSubscripts; }
    void flush_all() override;
    std::string_view backend_name() const override { return "embedded"; }

    OwnerId owner() const noexcept { return owner_; }
    EmbeddedStore& store() noexcept { return store_; }

protected:
    void run_transaction(const Body& body) override;

private:
    void require_not_multi(const char* what) const;

    EmbeddedStore& store_;
    OwnerId owner_;
    std::vector<EmbeddedStore::ReadStamp> watched_;
    std::vector<EmbeddedStore::Write> queued_;
};

}  // namespace threen1
