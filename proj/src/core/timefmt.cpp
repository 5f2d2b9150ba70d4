#include "core/timefmt.hpp"

#include <chrono>
#include <cstdio>

#include "core/error.hpp"

namespace masknet {

namespace {

// Civil-date conversions on the proleptic Gregorian calendar (Howard
// Hinnant's algorithms), avoiding timezone-dependent libc calls.
int64_t days_from_civil(int64_t y, int64_t m, int64_t d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const int64_t yoe = y - era * 400;
    const int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + doe - 719468;
}

void civil_from_days(int64_t z, int64_t& y, int64_t& m, int64_t& d) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const int64_t doe = z - era * 146097;
    const int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const int64_t mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = yoe + era * 400 + (m <= 2 ? 1 : 0);
}

int64_t floor_div(int64_t a, int64_t b) {
    return a >= 0 ? a / b : -((-a + b - 1) / b);
}

} // namespace

std::string format_iso8601_ms(int64_t unix_ms) {
    const int64_t days = floor_div(unix_ms, 86400000);
    int64_t rem = unix_ms - days * 86400000;
    int64_t y, m, d;
    civil_from_days(days, y, m, d);
    const int64_t ms = rem % 1000;
    rem /= 1000;
    const int64_t sec = rem % 60;
    rem /= 60;
    const int64_t min = rem % 60;
    const int64_t hour = rem / 60;
    char buf[72];
    std::snprintf(buf, sizeof buf, "%04lld-%02lld-%02lldT%02lld:%02lld:%02lld.%03lldZ",
                  static_cast<long long>(y), static_cast<long long>(m),
                  static_cast<long long>(d), static_cast<long long>(hour),
                  static_cast<long long>(min), static_cast<long long>(sec),
                  static_cast<long long>(ms));
    return buf;
}

int64_t parse_iso8601_ms(const std::string& text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    int consumed = 0;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &s,
                    &consumed) != 6 ||
        consumed == 0)
        fail(ErrorCode::parse, "bad ISO-8601 timestamp '" + text + "'");
    size_t pos = static_cast<size_t>(consumed);
    int64_t ms = 0;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        const size_t start = pos;
        int64_t frac = 0;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
            frac = frac * 10 + (text[pos] - '0');
            ++pos;
        }
        const size_t digits = pos - start;
        if (digits == 0 || digits > 9)
            fail(ErrorCode::parse, "bad fractional seconds in '" + text + "'");
        // scale to milliseconds
        for (size_t k = digits; k < 3; ++k) frac *= 10;
        for (size_t k = 3; k < digits; ++k) frac /= 10;
        ms = frac;
    }
    if (pos < text.size() && (text[pos] == 'Z' || text[pos] == 'z')) ++pos;
    if (pos != text.size())
        fail(ErrorCode::parse, "trailing characters in timestamp '" + text + "'");
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60)
        fail(ErrorCode::parse, "out-of-range field in timestamp '" + text + "'");
    return (days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s) * 1000 + ms;
}

int64_t wall_clock_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

} // namespace masknet
