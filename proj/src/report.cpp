#include "threen1/report.hpp"

#include <charconv>
#include <cstdio>
#include <vector>

#include <json.hpp>

#include "threen1/error.hpp"

namespace threen1 {

OutputFormat parse_format(std::string_view s) {
    if (s == "text") return OutputFormat::text;
    if (s == "json") return OutputFormat::json;
    if (s == "csv") return OutputFormat::csv;
    throw UsageError("unknown format \"" + std::string(s) + "\" (expected text, json or csv)");
}

namespace {

// Shortest representation that parses back to the same double.
std::string seconds(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    for (;;) {
        auto i = line.find(sep);
        out.push_back(line.substr(0, i));
        if (i == std::string_view::npos) break;
        line.remove_prefix(i + 1);
    }
    return out;
}

template <class T>
T number(std::string_view s, const char* field) {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
        throw UsageError(std::string("bad value for ") + field + ": \"" + std::string(s) + "\"");
    }
    return v;
}

}  // namespace

std::string format_text(const BenchReport& r) {
    std::string out;
    out += "backend       " + r.backend + "\n";
    out += "coordination  " + r.coordination + "\n";
    out += "workers       " + std::to_string(r.workers) + "\n";
    out += "limit         " + std::to_string(r.limit) + "\n";
    out += "block size    " + std::to_string(r.block_size) + "\n";
    out += "longest       " + std::to_string(r.longest) + "\n";
    out += "highest       " + std::to_string(r.highest) + "\n";
    out += "reads         " + std::to_string(r.reads) + "\n";
    out += "updates       " + std::to_string(r.updates) + "\n";
    char t[64];
    std::snprintf(t, sizeof t, "%.6f", r.elapsed_s);
    out += "elapsed (s)   " + std::string(t) + "\n";
    return out;
}

std::string format_json(const BenchReport& r) {
    nlohmann::ordered_json j;
    j["backend"] = r.backend;
    j["coordination"] = r.coordination;
    j["workers"] = r.workers;
    j["limit"] = r.limit;
    j["block_size"] = r.block_size;
    j["longest"] = r.longest;
    j["highest"] = r.highest;
    j["reads"] = r.reads;
    j["updates"] = r.updates;
    j["elapsed_s"] = r.elapsed_s;
    return j.dump() + "\n";
}

std::string csv_row(const BenchReport& r) {
    return r.backend + "," + r.coordination + "," + std::to_string(r.workers) + "," + std::to_string(r.limit) + "," +
           std::to_string(r.block_size) + "," + std::to_string(r.longest) + "," + std::to_string(r.highest) + "," +
           std::to_string(r.reads) + "," + std::to_string(r.updates) + "," + seconds(r.elapsed_s) + "\n";
}

std::string format_csv(const BenchReport& r) {
    return std::string(kCsvHeader) + "\n" + csv_row(r);
}

std::string format_report(const BenchReport& r, OutputFormat f) {
    switch (f) {
        case OutputFormat::text:
            return format_text(r);
        case OutputFormat::json:
            return format_json(r);
        case OutputFormat::csv:
            return format_csv(r);
    }
    return {};
}

BenchReport parse_json_report(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        BenchReport r;
        r.backend = j.at("backend").get<std::string>();
        r.coordination = j.at("coordination").get<std::string>();
        r.workers = j.at("workers").get<unsigned>();
        r.limit = j.at("limit").get<std::uint64_t>();
        r.block_size = j.at("block_size").get<std::uint64_t>();
        r.longest = j.at("longest").get<std::uint64_t>();
        r.highest = j.at("highest").get<std::uint64_t>();
        r.reads = j.at("reads").get<std::uint64_t>();
        r.updates = j.at("updates").get<std::uint64_t>();
        r.elapsed_s = j.at("elapsed_s").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("malformed JSON report: ") + e.what());
    }
}

BenchReport parse_csv_report(std::string_view text) {
    std::vector<std::string_view> lines;
    for (auto l : split(text, '\n')) {
        if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
        if (!l.empty()) lines.push_back(l);
    }
    if (!lines.empty() && lines.front() == kCsvHeader) lines.erase(lines.begin());
    if (lines.size() != 1) throw UsageError("expected exactly one CSV report row");
    auto f = split(lines.front(), ',');
    if (f.size() != 10) throw UsageError("CSV report row has " + std::to_string(f.size()) + " fields, expected 10");
    BenchReport r;
    r.backend = std::string(f[0]);
    r.coordination = std::string(f[1]);
    r.workers = number<unsigned>(f[2], "workers");
    r.limit = number<std::uint64_t>(f[3], "limit");
    r.block_size = number<std::uint64_t>(f[4], "block_size");
    r.longest = number<std::uint64_t>(f[5], "longest");
    r.highest = number<std::uint64_t>(f[6], "highest");
    r.reads = number<std::uint64_t>(f[7], "reads");
    r.updates = number<std::uint64_t>(f[8], "updates");
    r.elapsed_s = number<double>(f[9], "elapsed_s");
    return r;
}

}  // namespace threen1
