#pragma once

#include <cstdint>
#include <string>

namespace cmtad {

// All calendar arithmetic is UTC, proleptic Gregorian.

struct CivilTime {
    int year;
    int month;   // 1..12
    int day;     // 1..31
    int hour;    // 0..23
    int minute;  // 0..59
    int second;  // 0..59
};

std::int64_t days_from_civil(int y, int m, int d);
void civil_from_days(std::int64_t z, int& y, int& m, int& d);

std::int64_t epoch_from_civil(const CivilTime& c);
CivilTime civil_from_epoch(std::int64_t epoch);

int hour_of_day(std::int64_t epoch);
// Monday = 0 .. Sunday = 6.
int weekday(std::int64_t epoch);

// Accepts integer epoch seconds or ISO-8601 UTC ("2021-01-01T00:05:00Z",
// 'T' or space separator, 'Z' optional). Throws ValidationError otherwise.
std::int64_t parse_timestamp(const std::string& text);
std::string format_iso8601(std::int64_t epoch);

}  // namespace cmtad
