#include "gatsim/time.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace gatsim {

namespace {

int parse_int(std::string_view s, std::string_view what) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("bad " + std::string(what) + ": '" + std::string(s) + "'");
  }
  return v;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

// Howard Hinnant's days_from_civil / civil_from_days.
std::int64_t days_from_civil(CivilDate d) {
  std::int64_t y = d.year;
  const unsigned m = d.month;
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d.day - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return CivilDate{static_cast<int>(y + (m <= 2)), m, d};
}

Timestamp make_timestamp(CivilDate date, int minute) {
  return days_from_civil(date) * kMinutesPerDay + minute;
}

std::int64_t day_index(Timestamp t) { return floor_div(t, kMinutesPerDay); }

CivilDate date_of(Timestamp t) { return civil_from_days(day_index(t)); }

int minute_of_day(Timestamp t) {
  return static_cast<int>(t - day_index(t) * kMinutesPerDay);
}

int weekday(Timestamp t) {
  // 1970-01-01 was a Thursday (index 3).
  std::int64_t d = day_index(t);
  return static_cast<int>(((d % 7) + 7 + 3) % 7);
}

bool is_weekend(Timestamp t) { return weekday(t) >= 5; }

std::string weekday_name(int wd) {
  static constexpr std::array<const char*, 7> names{"Mon", "Tue", "Wed", "Thu",
                                                    "Fri", "Sat", "Sun"};
  return names.at(static_cast<std::size_t>(wd));
}

std::string format_date(CivilDate d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", d.year, d.month, d.day);
  return buf;
}

CivilDate parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') {
    throw std::invalid_argument("bad date: '" + std::string(s) + "'");
  }
  CivilDate d{parse_int(s.substr(0, 4), "year"),
              static_cast<unsigned>(parse_int(s.substr(5, 2), "month")),
              static_cast<unsigned>(parse_int(s.substr(8, 2), "day"))};
  if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31 ||
      civil_from_days(days_from_civil(d)) != d) {
    throw std::invalid_argument("bad date: '" + std::string(s) + "'");
  }
  return d;
}

std::string format_hhmm(int m) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d:%02d", m / 60, m % 60);
  return buf;
}

int parse_hhmm(std::string_view s) {
  auto colon = s.find(':');
  if (colon == std::string_view::npos || colon == 0 || colon > 2 || s.size() - colon != 3) {
    throw std::invalid_argument("bad time of day: '" + std::string(s) + "'");
  }
  int h = parse_int(s.substr(0, colon), "hour");
  int m = parse_int(s.substr(colon + 1), "minute");
  if (h < 0 || h > 24 || m < 0 || m > 59 || (h == 24 && m != 0)) {
    throw std::invalid_argument("time of day out of range: '" + std::string(s) + "'");
  }
  return h * 60 + m;
}

std::string to_iso(Timestamp t) {
  return format_date(date_of(t)) + "T" + format_hhmm(minute_of_day(t)) + ":00";
}

Timestamp parse_iso(std::string_view s) {
  if (s.size() < 16 || s[10] != 'T') {
    throw std::invalid_argument("bad ISO-8601 timestamp: '" + std::string(s) + "'");
  }
  CivilDate d = parse_date(s.substr(0, 10));
  int m = parse_hhmm(s.substr(11, 5));
  if (s.size() > 16) {
    std::string_view rest = s.substr(16);
    if (rest != ":00" && rest != ":00Z" && rest != "Z") {
      throw std::invalid_argument("unsupported ISO-8601 suffix: '" + std::string(s) + "'");
    }
  }
  return make_timestamp(d, m);
}

std::string format_label(Timestamp t) {
  return weekday_name(weekday(t)) + " " + format_date(date_of(t)) + " " +
         format_hhmm(minute_of_day(t));
}

}  // namespace gatsim
