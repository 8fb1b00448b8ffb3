#include <doctest.h>

#include "cmtad/calendar.hpp"
#include "cmtad/common.hpp"
#include "cmtad/rng.hpp"

#include <ctime>
#include <string>

using namespace cmtad;

TEST_CASE("civil conversions agree with gmtime on random epochs") {
    Rng rng(2024);
    for (int n = 0; n < 1000; ++n) {
        // ~1960..~2100, negative values reach back before the epoch.
        std::int64_t epoch = rng.uniform_int(-315619200LL, 4102444800LL);
        std::time_t t = static_cast<std::time_t>(epoch);
        std::tm tm{};
        gmtime_r(&t, &tm);

        CivilTime c = civil_from_epoch(epoch);
        REQUIRE(c.year == tm.tm_year + 1900);
        REQUIRE(c.month == tm.tm_mon + 1);
        REQUIRE(c.day == tm.tm_mday);
        REQUIRE(c.hour == tm.tm_hour);
        REQUIRE(c.minute == tm.tm_min);
        REQUIRE(c.second == tm.tm_sec);
        REQUIRE(epoch_from_civil(c) == epoch);

        REQUIRE(hour_of_day(epoch) == tm.tm_hour);
        // tm_wday counts Sunday = 0; ours counts Monday = 0.
        REQUIRE(weekday(epoch) == (tm.tm_wday + 6) % 7);
    }
}

TEST_CASE("known calendar facts") {
    CHECK(hour_of_day(0) == 0);
    CHECK(weekday(0) == 3);  // 1970-01-01 was a Thursday

    std::int64_t t1 = parse_timestamp("2021-01-01T00:05:00Z");
    CHECK(t1 == 1609459500);
    CHECK(hour_of_day(t1) == 0);
    CHECK(weekday(t1) == 4);  // Friday

    std::int64_t t2 = parse_timestamp("2021-01-04T13:00:00Z");
    CHECK(hour_of_day(t2) == 13);
    CHECK(weekday(t2) == 0);  // Monday

    CHECK(days_from_civil(1970, 1, 1) == 0);
    CHECK(days_from_civil(2000, 3, 1) == 11017);
    int y, m, d;
    civil_from_days(11017, y, m, d);
    CHECK(y == 2000);
    CHECK(m == 3);
    CHECK(d == 1);
    CHECK(days_from_civil(2000, 2, 29) == 11016);  // leap day exists
}

TEST_CASE("timestamp parsing accepts epochs and ISO-8601") {
    CHECK(parse_timestamp("0") == 0);
    CHECK(parse_timestamp("1609459500") == 1609459500);
    CHECK(parse_timestamp("-86400") == -86400);
    CHECK(parse_timestamp("2021-01-01T00:05:00") == 1609459500);
    CHECK(parse_timestamp("2021-01-01 00:05:00Z") == 1609459500);

    CHECK_THROWS_AS(parse_timestamp(""), ValidationError);
    CHECK_THROWS_AS(parse_timestamp("yesterday"), ValidationError);
    CHECK_THROWS_AS(parse_timestamp("2021-13-01T00:00:00Z"), ValidationError);
    CHECK_THROWS_AS(parse_timestamp("2021-01-01T25:00:00Z"), ValidationError);
    CHECK_THROWS_AS(parse_timestamp("2021-01-01T00:05"), ValidationError);
}

TEST_CASE("format and parse round-trip") {
    CHECK(format_iso8601(1609459500) == "2021-01-01T00:05:00Z");
    CHECK(format_iso8601(0) == "1970-01-01T00:00:00Z");
    Rng rng(7);
    for (int n = 0; n < 200; ++n) {
        std::int64_t epoch = rng.uniform_int(0LL, 4102444800LL);
        CHECK(parse_timestamp(format_iso8601(epoch)) == epoch);
    }
}
