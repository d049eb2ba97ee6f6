#include "threen1/lock_table.hpp"

#include <algorithm>

#include "threen1/error.hpp"

namespace threen1 {

bool LockTable::held_conflict(const std::string& path, OwnerId owner) const {
    return std::any_of(held_.begin(), held_.end(), [&](const Held& h) {
        return h.owner != owner && conflicts(h.path, path);
    });
}

bool LockTable::grab(const NodeHandle& handle, OwnerId owner,
                     std::optional<std::chrono::milliseconds> timeout) {
    const std::string& path = handle.encoded();
    std::unique_lock lk(mu_);
    for (const auto& h : held_) {
        if (h.owner != owner) continue;
        if (h.path == path) return true;
        if (conflicts(h.path, path)) {
            throw LockError("lock " + to_string(handle) + " conflicts with a lock its owner already holds");
        }
    }

    bool blocked_by_queue = std::any_of(queue_.begin(), queue_.end(),
                                        [&](const Waiter* w) { return conflicts(w->path, path); });
    if (!blocked_by_queue && !held_conflict(path, owner)) {
        held_.push_back({path, owner});
        notify_observer();
        return true;
    }

    Waiter self;
    self.path = path;
    self.owner = owner;
    auto it = queue_.insert(queue_.end(), &self);
    auto granted = [&] { return self.granted || self.cancelled; };
    if (timeout) {
        self.cv.wait_for(lk, *timeout, granted);
    } else {
        self.cv.wait(lk, granted);
    }
    if (self.granted) return true;
    if (self.cancelled) return false;

    queue_.erase(it);
    pump();
    return false;
}

void LockTable::release(const NodeHandle& handle, OwnerId owner) {
    std::lock_guard lk(mu_);
    auto it = std::find_if(held_.begin(), held_.end(), [&](const Held& h) {
        return h.owner == owner && h.path == handle.encoded();
    });
    if (it == held_.end()) {
        throw LockError("release of lock " + to_string(handle) + " which the caller does not hold");
    }
    held_.erase(it);
    notify_observer();
    pump();
}

std::size_t LockTable::release_all(OwnerId owner) {
    std::lock_guard lk(mu_);
    auto removed = std::erase_if(held_, [&](const Held& h) { return h.owner == owner; });
    for (auto it = queue_.begin(); it != queue_.end();) {
        if ((*it)->owner == owner) {
            (*it)->cancelled = true;
            (*it)->cv.notify_one();
            it = queue_.erase(it);
        } else {
            ++it;
        }
    }
    if (removed) notify_observer();
    pump();
    return removed;
}

void LockTable::pump() {
    // Caller holds mu_. Grant waiters in arrival order; a waiter that stays
    // blocked also blocks later waiters that conflict with it.
    std::vector<const std::string*> still_waiting;
    for (auto it = queue_.begin(); it != queue_.end();) {
        Waiter* w = *it;
        bool behind = std::any_of(still_waiting.begin(), still_waiting.end(),
                                  [&](const std::string* p) { return conflicts(*p, w->path); });
        if (!behind && !held_conflict(w->path, w->owner)) {
            held_.push_back({w->path, w->owner});
            w->granted = true;
            w->cv.notify_one();
            it = queue_.erase(it);
            notify_observer();
        } else {
            still_waiting.push_back(&w->path);
            ++it;
        }
    }
}

void LockTable::notify_observer() {
    if (observer_) observer_(held_);
}

std::vector<LockTable::Held> LockTable::held() const {
    std::lock_guard lk(mu_);
    return held_;
}

std::size_t LockTable::waiting() const {
    std::lock_guard lk(mu_);
    return queue_.size();
}

void LockTable::set_observer(Observer obs) {
    std::lock_guard lk(mu_);
    observer_ = std::move(obs);
}

}  // namespace threen1
