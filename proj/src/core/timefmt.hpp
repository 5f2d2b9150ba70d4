#pragma once

#include <cstdint>
#include <string>

namespace masknet {

// "2026-08-15T12:34:56.789Z": UTC, millisecond precision.
std::string format_iso8601_ms(int64_t unix_ms);

// Accepts the format above; the fractional part and trailing 'Z' are
// optional. Throws a parse error otherwise.
int64_t parse_iso8601_ms(const std::string& text);

int64_t wall_clock_ms();

} // namespace masknet
