#pragma once

// Small text helpers shared by the parsers and CSV writers.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sviplus::text {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

/// Whole-token parses; nullopt on trailing garbage or overflow.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::vector<std::string_view> split(std::string_view s, std::string_view delimiter);
/// Splits on runs of spaces and tabs.
std::vector<std::string_view> split_whitespace(std::string_view s);
std::string_view trim(std::string_view s);

}  // namespace sviplus::text
