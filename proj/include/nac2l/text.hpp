#pragma once

// Number formatting and parsing shared by the text formats.

#include <string>
#include <string_view>
#include <vector>

namespace nac2l {

/// Shortest decimal form that parses back to exactly `x`.
std::string format_double(double x);

/// Whole-string parses; return false on trailing garbage or overflow.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

/// Splits on runs of spaces and tabs.
std::vector<std::string_view> split_words(std::string_view line);

}  // namespace nac2l
