#pragma once

#include <string>
#include <vector>

namespace agristab::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Strict reader: UTF-8, comma separated, no quoting, one header row.
// Throws std::runtime_error naming the offending 1-based line on ragged rows.
Table read_file(const std::string& path);

void write_file(const std::string& path, const Table& table);

// Full-precision double formatting (round-trips through parse).
std::string format_double(double v);
// Fixed-decimal formatting for report emission.
std::string format_fixed(double v, int decimals);

double parse_double(const std::string& s, std::size_t line_no, const std::string& column);
long parse_long(const std::string& s, std::size_t line_no, const std::string& column);

} // namespace agristab::csv
