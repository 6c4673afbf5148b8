#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace shapecon {

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);
std::vector<std::string> split_whitespace(const std::string& s);

// Strict conversions; `what` names the field in the Error message.
double parse_double(const std::string& s, const std::string& what);
std::size_t parse_size(const std::string& s, const std::string& what);
long long parse_int(const std::string& s, const std::string& what);

// Shortest text that round-trips the exact double.
std::string format_double(double v);

}  // namespace shapecon
