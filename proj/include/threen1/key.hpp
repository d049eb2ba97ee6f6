#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace threen1 {

inline constexpr std::size_t kMaxSubscriptBytes = 1u << 20;
inline constexpr std::size_t kMaxValueBytes = 1u << 20;
inline constexpr std::size_t kMaxSubscripts = 31;

// A subscript as given by a caller. Integers are canonicalized to their
// shortest decimal form; strings are taken byte-for-byte.
class Subscript {
public:
    Subscript(std::string_view bytes) : text_(bytes) {}
    Subscript(const std::string& bytes) : text_(bytes) {}
    Subscript(const char* bytes) : text_(bytes) {}
    template <std::integral T>
        requires(!std::same_as<T, char> && !std::same_as<T, bool>)
    Subscript(T number) : text_(std::to_string(number)) {}

    const std::string& text() const noexcept { return text_; }

private:
    std::string text_;
};

struct Key {
    std::string varname;
    std::vector<std::string> subscripts;

    friend bool operator==(const Key&, const Key&) = default;
};

// Immutable path to a store node. The full path is encoded once, at
// construction, as a run of RESP bulk strings ("$<len>\r\n<bytes>\r\n" per
// segment, varname first) in a single buffer. Backends splice that buffer
// straight into their calls; the embedded store uses it as the cell key.
//
// Segments are self-delimiting, so path P is a prefix of path Q exactly when
// encoded(P) is a byte prefix of encoded(Q).
class NodeHandle {
public:
    NodeHandle(std::string_view varname, std::initializer_list<Subscript> subscripts = {});
    NodeHandle(std::string_view varname, const std::vector<Subscript>& subscripts);

    static NodeHandle from_key(const Key& key);

    NodeHandle child(const Subscript& subscript) const;

    const std::string& encoded() const noexcept { return encoded_; }
    // Encoding of the parent path; for a bare varname this is empty.
    std::string_view parent_encoded() const noexcept {
        return std::string_view(encoded_).substr(0, parent_len_);
    }
    // Handle for the bare varname (the Redis-level key).
    NodeHandle root() const;
    std::size_t depth() const noexcept { return depth_; }
    std::size_t hash() const noexcept { return hash_; }

    std::string_view varname() const;
    std::string_view last_subscript() const;  // varname when depth()==0
    std::vector<std::string_view> subscripts() const;
    Key key() const;

    bool is_prefix_of(const NodeHandle& other) const noexcept {
        return other.encoded_.starts_with(encoded_);
    }

    friend bool operator==(const NodeHandle& a, const NodeHandle& b) noexcept {
        return a.encoded_ == b.encoded_;
    }

private:
    NodeHandle() = default;
    void finish();

    std::string encoded_;
    std::uint32_t parent_len_ = 0;
    std::uint32_t depth_ = 0;
    std::size_t hash_ = 0;
};

// Appends "$<len>\r\n<bytes>\r\n".
void append_bulk(std::string& out, std::string_view bytes);
std::size_t bulk_size(std::string_view bytes);

// Splits an encoded path back into its segments. Throws UsageError on
// malformed input.
std::vector<std::string_view> decode_path(std::string_view encoded);

std::string to_string(const NodeHandle& h);

}  // namespace threen1

template <>
struct std::hash<threen1::NodeHandle> {
    std::size_t operator()(const threen1::NodeHandle& h) const noexcept { return h.hash(); }
};
