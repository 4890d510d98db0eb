#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace phrc {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Parses a complete decimal token; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view text);

std::optional<long long> parse_int(std::string_view text);

}  // namespace phrc
