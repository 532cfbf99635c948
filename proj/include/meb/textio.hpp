#pragma once

// Text formatting/parsing helpers shared by dataset files, CSV reports,
// and config parsing. Floats are printed with the shortest representation
// that round-trips exactly, so written files are byte-stable.

#include <string>
#include <string_view>
#include <vector>

namespace meb::textio {

std::string format_float(float v);
std::string format_double(double v);

float parse_float(std::string_view s, const std::string& where);
int parse_int(std::string_view s, const std::string& where);
std::int64_t parse_int64(std::string_view s, const std::string& where);

// Splits on a single-character delimiter; keeps empty fields.
std::vector<std::string_view> split(std::string_view line, char delim);

std::string_view trim(std::string_view s);

}  // namespace meb::textio
