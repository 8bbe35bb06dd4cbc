#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace gatsim {

/// Simulation timestamps are whole minutes since 1970-01-01T00:00 (no time zone).
using Timestamp = std::int64_t;

inline constexpr std::int64_t kMinutesPerDay = 1440;

struct CivilDate {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;

  friend bool operator==(const CivilDate&, const CivilDate&) = default;
};

std::int64_t days_from_civil(CivilDate d);
CivilDate civil_from_days(std::int64_t days);

Timestamp make_timestamp(CivilDate date, int minute_of_day = 0);
CivilDate date_of(Timestamp t);
std::int64_t day_index(Timestamp t);  // days since epoch
int minute_of_day(Timestamp t);
/// 0 = Monday ... 6 = Sunday
int weekday(Timestamp t);
bool is_weekend(Timestamp t);

/// "2025-03-10"
std::string format_date(CivilDate d);
CivilDate parse_date(std::string_view s);

/// "07:05"; minutes past 24h render as e.g. "25:10".
std::string format_hhmm(int minute_of_day);
/// Accepts "7:05", "07:05"; throws std::invalid_argument otherwise.
int parse_hhmm(std::string_view s);

/// "2025-03-10T07:05:00"
std::string to_iso(Timestamp t);
Timestamp parse_iso(std::string_view s);

/// "Mon 2025-03-10 07:05"
std::string format_label(Timestamp t);
std::string weekday_name(int wd);

}  // namespace gatsim
