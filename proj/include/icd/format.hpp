#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace icd {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
// Strict parse of an entire token; false on trailing junk or empty input.
bool parse_double(std::string_view s, double& out);
bool parse_u64(std::string_view s, std::uint64_t& out);
std::string format_fixed(double v, int decimals);

}  // namespace icd
