#pragma once

#include <string>
#include <string_view>

#include "threen1/bench.hpp"

namespace threen1 {

enum class OutputFormat { text, json, csv };

OutputFormat parse_format(std::string_view s);

// Column order of the CSV header and rows.
inline constexpr std::string_view kCsvHeader =
    "backend,coordination,workers,limit,block_size,longest,highest,reads,updates,elapsed_s";

std::string format_report(const BenchReport& r, OutputFormat f);
std::string format_text(const BenchReport& r);
std::string format_json(const BenchReport& r);
// Header line plus one row, newline terminated.
std::string format_csv(const BenchReport& r);
std::string csv_row(const BenchReport& r);

BenchReport parse_json_report(std::string_view text);
// Accepts a header line followed by one row, or just the row.
BenchReport parse_csv_report(std::string_view text);

}  // namespace threen1
