#include "ioncast/timeutil.hpp"

#include <chrono>
#include <cstdio>

#include "ioncast/errors.hpp"

namespace ioncast {

namespace {

using namespace std::chrono;

sys_days to_days(Timestamp t) {
  auto s = sys_seconds{seconds{t}};
  return floor<days>(s);
}

}  // namespace

Timestamp make_timestamp(int year, int month, int day, int hour, int minute, int second) {
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) throw ArgumentError("invalid calendar date " + std::to_string(year) + "-" + std::to_string(month) + "-" +
                                     std::to_string(day));
  if (hour < 0 || hour > 23 || minute < 0 || minute > 59 || second < 0 || second > 60)
    throw ArgumentError("invalid time of day");
  const auto d = sys_days{ymd};
  return d.time_since_epoch().count() * 86400LL + hour * 3600LL + minute * 60LL + second;
}

Timestamp parse_iso8601(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int used = 0;
  std::string body = text;
  while (!body.empty() && (body.back() == 'Z' || body.back() == 'z' || body.back() == ' ' || body.back() == '\r'))
    body.pop_back();
  if (std::sscanf(body.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &used) != 3)
    throw ArgumentError("unparseable timestamp '" + text + "'");
  if (static_cast<std::size_t>(used) != body.size()) {
    int more = 0;
    const char* rest = body.c_str() + used;
    if (std::sscanf(rest, "%c%2d:%2d:%2d%n", &sep, &h, &mi, &s, &more) == 4 ||
        (s = 0, std::sscanf(rest, "%c%2d:%2d%n", &sep, &h, &mi, &more) == 3)) {
      if ((sep != 'T' && sep != ' ') || static_cast<std::size_t>(used + more) != body.size())
        throw ArgumentError("unparseable timestamp '" + text + "'");
    } else {
      throw ArgumentError("unparseable timestamp '" + text + "'");
    }
  }
  try {
    return make_timestamp(y, mo, d, h, mi, s);
  } catch (const ArgumentError&) {
    throw ArgumentError("unparseable timestamp '" + text + "'");
  }
}

std::string format_iso8601(Timestamp t) {
  const auto d = to_days(t);
  const year_month_day ymd{d};
  const auto rem = t - d.time_since_epoch().count() * 86400LL;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<long long>(rem / 3600),
                static_cast<long long>(rem / 60 % 60), static_cast<long long>(rem % 60));
  return buf;
}

int year_of(Timestamp t) { return static_cast<int>(year_month_day{to_days(t)}.year()); }

int day_of_year(Timestamp t) {
  const auto d = to_days(t);
  const year_month_day ymd{d};
  const sys_days jan1{ymd.year() / January / 1};
  return static_cast<int>((d - jan1).count()) + 1;
}

double julian_date(Timestamp t) { return 2440587.5 + static_cast<double>(t) / 86400.0; }

}  // namespace ioncast
