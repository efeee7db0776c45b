#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cpsgame {

/// Shortest decimal text that round-trips to the same double.
std::string format_number(double x);

/// Parses a full-string double, throwing IoError on junk.
double parse_number(std::string_view s);

std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace cpsgame
