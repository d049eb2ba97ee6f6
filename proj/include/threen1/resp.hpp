#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace threen1 {

// One RESP2 value.
struct RespFrame {
    enum class Type { simple, error, integer, bulk, array };

    Type type = Type::simple;
    std::string text;         // simple / error / bulk payload
    std::int64_t number = 0;  // integer
    bool null = false;        // null bulk string or null array
    std::vector<RespFrame> elements;

    static RespFrame simple(std::string s) { return {Type::simple, std::move(s), 0, false, {}}; }
    static RespFrame error(std::string s) { return {Type::error, std::move(s), 0, false, {}}; }
    static RespFrame integer(std::int64_t n) { return {Type::integer, {}, n, false, {}}; }
    static RespFrame bulk(std::string s) { return {Type::bulk, std::move(s), 0, false, {}}; }
    static RespFrame null_bulk() { return {Type::bulk, {}, 0, true, {}}; }
    static RespFrame array(std::vector<RespFrame> items) { return {Type::array, {}, 0, false, std::move(items)}; }
    static RespFrame null_array() { return {Type::array, {}, 0, true, {}}; }

    bool is_null() const noexcept { return null; }
    bool is_error() const noexcept { return type == Type::error; }
    bool is_ok() const noexcept { return type == Type::simple && text == "OK"; }

    friend bool operator==(const RespFrame&, const RespFrame&) = default;
};

inline constexpr std::size_t kMaxBulkLength = 512u << 20;
inline constexpr std::int64_t kMaxArrayLength = 1 << 24;
inline constexpr int kMaxNesting = 32;

// Throws ProtocolError if a simple string or error payload contains CR or LF.
void encode_frame(std::string& out, const RespFrame& f);
std::string encode_frame(const RespFrame& f);

// Builds "*N\r\n" followed by one bulk string per argument.
std::string encode_command(const std::vector<std::string_view>& args);

struct Decoded {
    RespFrame frame;
    std::size_t consumed;
};

// Decodes one frame from the front of `in`. Returns nullopt when `in` holds
// only a prefix of a valid frame (nothing is consumed). Throws ProtocolError
// on bytes that cannot begin or continue a valid frame.
std::optional<Decoded> decode_frame(std::string_view in);

std::string describe(const RespFrame& f);

}  // namespace threen1
