#include "threen1/store.hpp"

#include <charconv>
#include <random>
#include <thread>

#include "threen1/error.hpp"

namespace threen1 {

std::int64_t parse_integer(std::string_view text) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc{} || p != text.data() + text.size() || text.front() == '+') {
        throw StoreError("value is not an integer or out of range: \"" + std::string(text.substr(0, 64)) +
                         "\"");
    }
    return v;
}

std::uint64_t parse_unsigned(std::string_view text) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc{} || p != text.data() + text.size()) {
        throw StoreError("value is not an unsigned integer: \"" + std::string(text.substr(0, 64)) + "\"");
    }
    return v;
}

void retry_backoff(unsigned attempt) {
    if (attempt < 4) return;
    thread_local std::minstd_rand rng{std::random_device{}()};
    unsigned spins = 1 + rng() % std::min(attempt, 16u);
    for (unsigned i = 0; i < spins; ++i) std::this_thread::yield();
}

void check_value_size(std::string_view value) {
    if (value.size() > kMaxValueBytes) {
        throw UsageError("value of " + std::to_string(value.size()) + " bytes exceeds the " +
                         std::to_string(kMaxValueBytes) + "-byte limit");
    }
}

bool Session::grab(const NodeHandle&, Timeout) {
    throw UsageError(std::string(backend_name()) + " backend has no locks");
}

void Session::release(const NodeHandle&) {
    throw UsageError(std::string(backend_name()) + " backend has no locks");
}

}  // namespace threen1
