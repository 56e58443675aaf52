#pragma once

#include <cstdint>
#include <string>

namespace ioncast {

// UTC seconds since 1970-01-01T00:00:00Z.
using Timestamp = std::int64_t;

// Accepts YYYY-MM-DD, YYYY-MM-DDTHH:MM, YYYY-MM-DDTHH:MM:SS, with 'T' or a
// space separator and an optional trailing 'Z'. Throws ArgumentError.
Timestamp parse_iso8601(const std::string& text);
std::string format_iso8601(Timestamp t);  // YYYY-MM-DDTHH:MM:SSZ

Timestamp make_timestamp(int year, int month, int day, int hour = 0, int minute = 0, int second = 0);
int year_of(Timestamp t);
int day_of_year(Timestamp t);  // 1-based

// Julian date of a timestamp.
double julian_date(Timestamp t);

}  // namespace ioncast
