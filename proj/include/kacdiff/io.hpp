#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace kacdiff {

std::string_view version();

/// 64-bit FNV-1a, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

/// Round-trip formatting (%.17g); +inf prints as "inf", -inf as "-inf",
/// NaN as "nan".
std::string format_number(double v);

/// "# kacdiff <version> config=<hash>" followed by ` key=value` pairs.
std::string header_line(std::string_view config_hash, std::string_view extra = {});

}  // namespace kacdiff
