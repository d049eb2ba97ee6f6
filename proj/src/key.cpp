#include "threen1/key.hpp"

#include <charconv>
#include <functional>

#include "threen1/error.hpp"

namespace threen1 {

namespace {

void check_subscript(std::string_view s) {
    if (s.size() > kMaxSubscriptBytes) {
        throw UsageError("subscript of " + std::to_string(s.size()) + " bytes exceeds the " +
                         std::to_string(kMaxSubscriptBytes) + "-byte limit");
    }
}

std::size_t digits(std::size_t n) {
    std::size_t d = 1;
    while (n >= 10) {
        n /= 10;
        ++d;
    }
    return d;
}

}  // namespace

std::size_t bulk_size(std::string_view bytes) {
    return 1 + digits(bytes.size()) + 2 + bytes.size() + 2;
}

void append_bulk(std::string& out, std::string_view bytes) {
    char len[24];
    auto [end, ec] = std::to_chars(len, len + sizeof len, bytes.size());
    out.push_back('$');
    out.append(len, end);
    out.append("\r\n");
    out.append(bytes);
    out.append("\r\n");
}

std::vector<std::string_view> decode_path(std::string_view encoded) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (pos < encoded.size()) {
        if (encoded[pos] != '$') throw UsageError("malformed encoded path");
        auto crlf = encoded.find("\r\n", pos);
        if (crlf == std::string_view::npos) throw UsageError("malformed encoded path");
        std::size_t len = 0;
        auto [p, ec] = std::from_chars(encoded.data() + pos + 1, encoded.data() + crlf, len);
        if (ec != std::errc{} || p != encoded.data() + crlf) throw UsageError("malformed encoded path");
        auto body = crlf + 2;
        if (body + len + 2 > encoded.size()) throw UsageError("malformed encoded path");
        out.push_back(encoded.substr(body, len));
        pos = body + len + 2;
    }
    return out;
}

NodeHandle::NodeHandle(std::string_view varname, std::initializer_list<Subscript> subscripts)
    : NodeHandle(varname, std::vector<Subscript>(subscripts)) {}

NodeHandle::NodeHandle(std::string_view varname, const std::vector<Subscript>& subscripts) {
    if (varname.empty()) throw UsageError("node varname must be non-empty");
    if (subscripts.size() > kMaxSubscripts) {
        throw UsageError("too many subscripts (limit " + std::to_string(kMaxSubscripts) + ")");
    }
    std::size_t total = bulk_size(varname);
    for (const auto& s : subscripts) {
        check_subscript(s.text());
        total += bulk_size(s.text());
    }
    encoded_.reserve(total);
    append_bulk(encoded_, varname);
    parent_len_ = 0;
    for (const auto& s : subscripts) {
        parent_len_ = static_cast<std::uint32_t>(encoded_.size());
        append_bulk(encoded_, s.text());
    }
    depth_ = static_cast<std::uint32_t>(subscripts.size());
    finish();
}

NodeHandle NodeHandle::from_key(const Key& key) {
    std::vector<Subscript> subs(key.subscripts.begin(), key.subscripts.end());
    return NodeHandle(key.varname, subs);
}

void NodeHandle::finish() {
    hash_ = std::hash<std::string>{}(encoded_);
}

NodeHandle NodeHandle::child(const Subscript& subscript) const {
    check_subscript(subscript.text());
    if (depth_ + 1 > kMaxSubscripts) {
        throw UsageError("too many subscripts (limit " + std::to_string(kMaxSubscripts) + ")");
    }
    NodeHandle out;
    out.encoded_.reserve(encoded_.size() + bulk_size(subscript.text()));
    out.encoded_.append(encoded_);
    out.parent_len_ = static_cast<std::uint32_t>(encoded_.size());
    append_bulk(out.encoded_, subscript.text());
    out.depth_ = depth_ + 1;
    out.finish();
    return out;
}

NodeHandle NodeHandle::root() const {
    return NodeHandle(varname());
}

std::string_view NodeHandle::varname() const {
    // "$<len>\r\n<name>\r\n...": read the first segment without a full decode.
    std::string_view e = encoded_;
    auto crlf = e.find("\r\n");
    std::size_t len = 0;
    std::from_chars(e.data() + 1, e.data() + crlf, len);
    return e.substr(crlf + 2, len);
}

std::string_view NodeHandle::last_subscript() const {
    std::string_view e = std::string_view(encoded_).substr(parent_len_);
    auto crlf = e.find("\r\n");
    std::size_t len = 0;
    std::from_chars(e.data() + 1, e.data() + crlf, len);
    return e.substr(crlf + 2, len);
}

std::vector<std::string_view> NodeHandle::subscripts() const {
    auto parts = decode_path(encoded_);
    parts.erase(parts.begin());
    return parts;
}

Key NodeHandle::key() const {
    auto parts = decode_path(encoded_);
    Key k{std::string(parts.front()), {}};
    for (std::size_t i = 1; i < parts.size(); ++i) k.subscripts.emplace_back(parts[i]);
    return k;
}

std::string to_string(const NodeHandle& h) {
    auto parts = decode_path(h.encoded());
    std::string out(parts.front());
    if (parts.size() > 1) {
        out.push_back('(');
        for (std::size_t i = 1; i < parts.size(); ++i) {
            if (i > 1) out.push_back(',');
            out.push_back('"');
            out.append(parts[i]);
            out.push_back('"');
        }
        out.push_back(')');
    }
    return out;
}

}  // namespace threen1
