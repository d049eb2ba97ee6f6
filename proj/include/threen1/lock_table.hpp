#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <list>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "threen1/key.hpp"

namespace threen1 {

using OwnerId = std::uint64_t;

// Hierarchical locks keyed by node path. Two paths conflict iff one is a
// prefix of the other, so holding ("trigger") blocks ("trigger","42") and
// holding any ("finished",x) blocks ("finished").
//
// Waiters are served first-come first-served: a request is granted only when
// it conflicts with no held lock and with no earlier request still waiting.
class LockTable {
public:
    struct Held {
        std::string path;  // NodeHandle encoding
        OwnerId owner = 0;
    };

    // Blocks until granted or the timeout elapses. Re-grabbing a path the owner
    // already holds is a no-op success; grabbing a path that conflicts with the
    // owner's own lock throws LockError.
    bool grab(const NodeHandle& path, OwnerId owner, std::optional<std::chrono::milliseconds> timeout);
    // Throws LockError unless owner holds exactly this path.
    void release(const NodeHandle& path, OwnerId owner);
    // Drops everything owner holds or waits for; the owner's context is gone.
    std::size_t release_all(OwnerId owner);

    std::vector<Held> held() const;
    std::size_t waiting() const;

    // Observer called under the table mutex after every grant and release;
    // used by safety checkers.
    using Observer = std::function<void(const std::vector<Held>&)>;
    void set_observer(Observer obs);

private:
    struct Waiter {
        std::string path;
        OwnerId owner = 0;
        bool granted = false;
        bool cancelled = false;
        std::condition_variable cv;
    };

    static bool conflicts(const std::string& a, const std::string& b) noexcept {
        return a.starts_with(b) || b.starts_with(a);
    }
    bool held_conflict(const std::string& path, OwnerId owner) const;
    void pump();
    void notify_observer();

    mutable std::mutex mu_;
    std::vector<Held> held_;
    std::list<Waiter*> queue_;
    Observer observer_;
};

}  // namespace threen1
