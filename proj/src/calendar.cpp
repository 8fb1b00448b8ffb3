#include "cmtad/calendar.hpp"

#include "cmtad/common.hpp"

#include <cctype>
#include <cstdio>

namespace cmtad {

std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

std::int64_t epoch_from_civil(const CivilTime& c) {
    return days_from_civil(c.year, c.month, c.day) * 86400 + c.hour * 3600 + c.minute * 60 +
           c.second;
}

CivilTime civil_from_epoch(std::int64_t epoch) {
    std::int64_t days = epoch / 86400;
    std::int64_t rem = epoch % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    CivilTime c;
    civil_from_days(days, c.year, c.month, c.day);
    c.hour = static_cast<int>(rem / 3600);
    c.minute = static_cast<int>((rem % 3600) / 60);
    c.second = static_cast<int>(rem % 60);
    return c;
}

int hour_of_day(std::int64_t epoch) { return civil_from_epoch(epoch).hour; }

int weekday(std::int64_t epoch) {
    std::int64_t days = epoch / 86400;
    if (epoch % 86400 < 0) days -= 1;
    // 1970-01-01 is a Thursday, i.e. 3 with Monday = 0.
    std::int64_t w = (days + 3) % 7;
    if (w < 0) w += 7;
    return static_cast<int>(w);
}

std::int64_t parse_timestamp(const std::string& text) {
    if (text.empty()) throw ValidationError("empty timestamp");
    bool digits_only = true;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char ch = text[i];
        if (i == 0 && (ch == '-' || ch == '+')) continue;
        if (!std::isdigit(static_cast<unsigned char>(ch))) {
            digits_only = false;
            break;
        }
    }
    if (digits_only) {
        try {
            return std::stoll(text);
        } catch (const std::exception&) {
            throw ValidationError("unparseable epoch timestamp '" + text + "'");
        }
    }
    CivilTime c{};
    char sep = 0, tail = 0;
    int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d%c", &c.year, &c.month, &c.day, &sep,
                        &c.hour, &c.minute, &c.second, &tail);
    if (n < 7 || (sep != 'T' && sep != ' ') || (n == 8 && tail != 'Z'))
        throw ValidationError("unparseable timestamp '" + text + "' (expect ISO-8601 UTC or epoch seconds)");
    if (c.month < 1 || c.month > 12 || c.day < 1 || c.day > 31 || c.hour > 23 || c.minute > 59 ||
        c.second > 59)
        throw ValidationError("timestamp field out of range in '" + text + "'");
    return epoch_from_civil(c);
}

std::string format_iso8601(std::int64_t epoch) {
    CivilTime c = civil_from_epoch(epoch);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", c.year, c.month, c.day,
                  c.hour, c.minute, c.second);
    return buf;
}

}  // namespace cmtad
