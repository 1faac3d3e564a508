#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace no2 {

/// Calendar date stored as days since 1970-01-01 (proleptic Gregorian).
struct Date {
  std::int32_t days = 0;

  auto operator<=>(const Date&) const = default;

  Date operator+(int n) const { return Date{days + n}; }
  Date operator-(int n) const { return Date{days - n}; }
  int operator-(Date other) const { return days - other.days; }

  static Date from_ymd(int year, int month, int day);
  /// Parses strict `YYYY-MM-DD`. Throws InputError on malformed input.
  static Date parse(std::string_view text);
  std::string to_string() const;

  void to_ymd(int& year, int& month, int& day) const;
};

/// Date plus hour-of-day, the resolution of monitor readings.
struct DateHour {
  Date date;
  int hour = 0;  // 0..23

  auto operator<=>(const DateHour&) const = default;

  /// Parses `YYYY-MM-DDTHH` (an optional trailing `:00` is accepted).
  static DateHour parse(std::string_view text);
  std::string to_string() const;

  std::int64_t serial_hours() const {
    return static_cast<std::int64_t>(date.days) * 24 + hour;
  }
};

}  // namespace no2
