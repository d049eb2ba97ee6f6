#include "threen1/resp.hpp"

#include <charconv>

#include "threen1/error.hpp"
#include "threen1/key.hpp"

namespace threen1 {

namespace {

void append_line(std::string& out, char type, std::string_view payload) {
    out.push_back(type);
    out.append(payload);
    out.append("\r\n");
}

void append_number_line(std::string& out, char type, std::int64_t n) {
    char buf[24];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, n);
    out.push_back(type);
    out.append(buf, end);
    out.append("\r\n");
}

void check_line_payload(std::string_view s) {
    if (s.find_first_of("\r\n") != std::string_view::npos) {
        throw ProtocolError("simple string or error payload contains CR or LF");
    }
}

class Decoder {
public:
    explicit Decoder(std::string_view in) : in_(in) {}

    // nullopt: incomplete
    std::optional<RespFrame> frame(int depth) {
        if (depth > kMaxNesting) throw ProtocolError("frames nested deeper than " + std::to_string(kMaxNesting));
        if (pos_ >= in_.size()) return std::nullopt;
        char type = in_[pos_++];
        auto line = next_line();
        if (!line) return std::nullopt;
        switch (type) {
            case '+':
                check_line_payload(*line);
                return RespFrame::simple(std::string(*line));
            case '-':
                check_line_payload(*line);
                return RespFrame::error(std::string(*line));
            case ':':
                return RespFrame::integer(parse_int(*line, "integer"));
            case '$': {
                std::int64_t len = parse_int(*line, "bulk length");
                if (len == -1) return RespFrame::null_bulk();
                if (len < 0 || static_cast<std::uint64_t>(len) > kMaxBulkLength) {
                    throw ProtocolError("invalid bulk length " + std::to_string(len));
                }
                auto n = static_cast<std::size_t>(len);
                if (in_.size() - pos_ < n + 2) return std::nullopt;
                if (in_[pos_ + n] != '\r' || in_[pos_ + n + 1] != '\n') {
                    throw ProtocolError("bulk string not terminated by CRLF");
                }
                auto body = in_.substr(pos_, n);
                pos_ += n + 2;
                return RespFrame::bulk(std::string(body));
            }
            case '*': {
                std::int64_t count = parse_int(*line, "array length");
                if (count == -1) return RespFrame::null_array();
                if (count < 0 || count > kMaxArrayLength) {
                    throw ProtocolError("invalid array length " + std::to_string(count));
                }
                std::vector<RespFrame> items;
                for (std::int64_t i = 0; i < count; ++i) {
                    auto item = frame(depth + 1);
                    if (!item) return std::nullopt;
                    items.push_back(std::move(*item));
                }
                return RespFrame::array(std::move(items));
            }
            default:
                throw ProtocolError("unknown RESP type byte 0x" + hex(type));
        }
    }

    std::size_t consumed() const noexcept { return pos_; }

private:
    std::optional<std::string_view> next_line() {
        auto crlf = in_.find("\r\n", pos_);
        if (crlf == std::string_view::npos) {
            // A bare LF can never become part of a valid header line.
            if (in_.find('\n', pos_) != std::string_view::npos) throw ProtocolError("line terminated by bare LF");
            return std::nullopt;
        }
        auto line = in_.substr(pos_, crlf - pos_);
        pos_ = crlf + 2;
        return line;
    }

    static std::int64_t parse_int(std::string_view s, const char* what) {
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
            throw ProtocolError(std::string("malformed ") + what);
        }
        return v;
    }

    static std::string hex(char c) {
        static constexpr char digits[] = "0123456789abcdef";
        auto u = static_cast<unsigned char>(c);
        return {digits[u >> 4], digits[u & 15]};
    }

    std::string_view in_;
    std::size_t pos_ = 0;
};

}  // namespace

void encode_frame(std::string& out, const RespFrame& f) {
    switch (f.type) {
        case RespFrame::Type::simple:
            check_line_payload(f.text);
            append_line(out, '+', f.text);
            break;
        case RespFrame::Type::error:
            check_line_payload(f.text);
            append_line(out, '-', f.text);
            break;
        case RespFrame::Type::integer:
            append_number_line(out, ':', f.number);
            break;
        case RespFrame::Type::bulk:
            if (f.null) {
                out.append("$-1\r\n");
            } else {
                append_bulk(out, f.text);
            }
            break;
        case RespFrame::Type::array:
            if (f.null) {
                out.append("*-1\r\n");
                break;
            }
            append_number_line(out, '*', static_cast<std::int64_t>(f.elements.size()));
            for (const auto& e : f.elements) encode_frame(out, e);
            break;
    }
}

std::string encode_frame(const RespFrame& f) {
    std::string out;
    encode_frame(out, f);
    return out;
}

std::string encode_command(const std::vector<std::string_view>& args) {
    std::string out;
    append_number_line(out, '*', static_cast<std::int64_t>(args.size()));
    for (auto a : args) append_bulk(out, a);
    return out;
}

std::optional<Decoded> decode_frame(std::string_view in) {
    Decoder d(in);
    auto f = d.frame(0);
    if (!f) return std::nullopt;
    return Decoded{std::move(*f), d.consumed()};
}

std::string describe(const RespFrame& f) {
    switch (f.type) {
        case RespFrame::Type::simple: return "+" + f.text;
        case RespFrame::Type::error: return "-" + f.text;
        case RespFrame::Type::integer: return ":" + std::to_string(f.number);
        case RespFrame::Type::bulk: return f.null ? "(nil)" : "\"" + f.text + "\"";
        case RespFrame::Type::array: {
            if (f.null) return "(nil array)";
            std::string out = "[";
            for (std::size_t i = 0; i < f.elements.size(); ++i) {
                if (i) out += ", ";
                out += describe(f.elements[i]);
            }
            return out + "]";
        }
    }
    return {};
}

}  // namespace threen1
