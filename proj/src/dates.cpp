#include "no2/dates.hpp"

#include <array>
#include <charconv>

#include "no2/errors.hpp"

namespace no2 {

namespace {

// days_from_civil / civil_from_days, Howard Hinnant's algorithms.
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = static_cast<int>(yy + (m <= 2));
}

bool is_leap(int y) { return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0); }

int days_in_month(int y, int m) {
  static constexpr std::array<int, 12> mdays = {31, 28, 31, 30, 31, 30,
                                                31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap(y)) return 29;
  return mdays[m - 1];
}

int parse_fixed_int(std::string_view s, const char* what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw InputError(std::string("invalid ") + what + " in date/time field");
  return v;
}

}  // namespace

Date Date::from_ymd(int year, int month, int day) {
  return Date{static_cast<std::int32_t>(days_from_civil(
      year, static_cast<unsigned>(month), static_cast<unsigned>(day)))};
}

Date Date::parse(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-')
    throw InputError("invalid date '" + std::string(text) +
                     "' (expected YYYY-MM-DD)");
  const int y = parse_fixed_int(text.substr(0, 4), "year");
  const int m = parse_fixed_int(text.substr(5, 2), "month");
  const int d = parse_fixed_int(text.substr(8, 2), "day");
  if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, m))
    throw InputError("invalid date '" + std::string(text) + "'");
  return from_ymd(y, m, d);
}

void Date::to_ymd(int& year, int& month, int& day) const {
  unsigned m = 0, d = 0;
  civil_from_days(days, year, m, d);
  month = static_cast<int>(m);
  day = static_cast<int>(d);
}

std::string Date::to_string() const {
  int y = 0, m = 0, d = 0;
  to_ymd(y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

DateHour DateHour::parse(std::string_view text) {
  // YYYY-MM-DDTHH with optional trailing :00
  if (text.size() < 13 || text[10] != 'T')
    throw InputError("invalid timestamp '" + std::string(text) +
                     "' (expected YYYY-MM-DDTHH)");
  const Date date = Date::parse(text.substr(0, 10));
  std::string_view rest = text.substr(11);
  if (rest.size() == 5 && rest.substr(2) == ":00") rest = rest.substr(0, 2);
  if (rest.size() != 2)
    throw InputError("invalid timestamp '" + std::string(text) +
                     "' (expected YYYY-MM-DDTHH)");
  const int h = parse_fixed_int(rest, "hour");
  if (h < 0 || h > 23)
    throw InputError("hour out of range in timestamp '" + std::string(text) +
                     "'");
  return DateHour{date, h};
}

std::string DateHour::to_string() const {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "T%02d", hour);
  return date.to_string() + buf;
}

}  // namespace no2
