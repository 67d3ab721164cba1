#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "mpa/errors.hpp"

namespace mpa {

// Hours since the Unix epoch. All panels are indexed on this grid.
using EpochHour = std::int64_t;

namespace detail {

// Howard Hinnant's civil calendar algorithms.
constexpr std::int64_t days_from_civil(int y, unsigned m, unsigned d) noexcept {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
  int year;
  unsigned month;
  unsigned day;
};

constexpr CivilDate civil_from_days(std::int64_t z) noexcept {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return {static_cast<int>(y + (m <= 2)), m, d};
}

// 0 = Monday .. 6 = Sunday
constexpr int weekday_from_days(std::int64_t z) noexcept {
  return static_cast<int>(z >= -3 ? (z + 3) % 7 : (z + 4) % 7 + 6);
}

// Day number of the last Sunday of the given month.
inline std::int64_t last_sunday(int year, unsigned month) {
  unsigned last_day = 31;
  if (month == 4 || month == 6 || month == 9 || month == 11) last_day = 30;
  if (month == 2)
    last_day = (year % 4 == 0 && (year % 100 != 0 || year % 400 == 0)) ? 29 : 28;
  std::int64_t d = days_from_civil(year, month, last_day);
  const int wd = weekday_from_days(d);  // 0=Mon..6=Sun
  return d - ((wd + 1) % 7);
}

}  // namespace detail

// Civil time zones supported by the artifact. Berlin follows the EU rule:
// CET (UTC+1) with CEST (UTC+2) between 01:00 UTC on the last Sunday of
// March and 01:00 UTC on the last Sunday of October.
enum class TimeZone { Utc, EuropeBerlin };

inline TimeZone parse_timezone(const std::string& name) {
  if (name == "UTC" || name == "utc") return TimeZone::Utc;
  if (name == "Europe/Berlin") return TimeZone::EuropeBerlin;
  throw ConfigError("unknown timezone: " + name);
}

// UTC offset in hours at the given instant.
inline int utc_offset_hours(EpochHour t, TimeZone tz) {
  if (tz == TimeZone::Utc) return 0;
  const std::int64_t day = (t >= 0 ? t / 24 : (t - 23) / 24);
  const auto cd = detail::civil_from_days(day);
  const std::int64_t dst_start = detail::last_sunday(cd.year, 3) * 24 + 1;
  const std::int64_t dst_end = detail::last_sunday(cd.year, 10) * 24 + 1;
  return (t >= dst_start && t < dst_end) ? 2 : 1;
}

struct LocalTime {
  int year;
  unsigned month;   // 1..12
  unsigned day;     // 1..31
  unsigned hour;    // 0..23
  int weekday;      // 0 = Monday .. 6 = Sunday
};

inline LocalTime local_time(EpochHour t, TimeZone tz) {
  const EpochHour lt = t + utc_offset_hours(t, tz);
  const std::int64_t day = (lt >= 0 ? lt / 24 : (lt - 23) / 24);
  const auto cd = detail::civil_from_days(day);
  return {cd.year, cd.month, cd.day, static_cast<unsigned>(lt - day * 24),
          detail::weekday_from_days(day)};
}

// Year-month key (year * 12 + month - 1) in the given civil timezone.
inline std::int64_t month_key(EpochHour t, TimeZone tz) {
  const auto l = local_time(t, tz);
  return static_cast<std::int64_t>(l.year) * 12 + (l.month - 1);
}

inline int civil_year(EpochHour t, TimeZone tz) { return local_time(t, tz).year; }

// Canonical timestamp format: "YYYY-MM-DDTHH:00:00Z".
inline std::string format_timestamp(EpochHour t) {
  const std::int64_t day = (t >= 0 ? t / 24 : (t - 23) / 24);
  const auto cd = detail::civil_from_days(day);
  const int hour = static_cast<int>(t - day * 24);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:00:00Z", cd.year, cd.month,
                cd.day, hour);
  return buf;
}

// Accepts "YYYY-MM-DDTHH:00:00Z", "YYYY-MM-DDTHH:00", and the space-separated
// variants. Minutes/seconds must be zero: inputs are an hourly grid.
inline EpochHour parse_timestamp(const std::string& s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  char sep = 0;
  int n = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &se);
  if (n < 5 || (sep != 'T' && sep != ' '))
    throw ParseError("unparsable timestamp: '" + s + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23)
    throw ParseError("timestamp out of range: '" + s + "'");
  if (mi != 0 || se != 0)
    throw ParseError("timestamp not on the hourly grid: '" + s + "'");
  return detail::days_from_civil(y, static_cast<unsigned>(mo),
                                 static_cast<unsigned>(d)) *
             24 +
         h;
}

}  // namespace mpa
