#include "methanet/calendar.hpp"

#include <charconv>
#include <cstdio>

#include "methanet/error.hpp"

namespace methanet {

namespace {

int parse_int(std::string_view s, std::string_view whole) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw FormatError("bad date/time field in '" + std::string(whole) + "'");
  }
  return value;
}

Date make_date(std::string_view text, std::string_view whole) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw FormatError("expected YYYY-MM-DD, got '" + std::string(whole) + "'");
  }
  using namespace std::chrono;
  const year_month_day ymd{year{parse_int(text.substr(0, 4), whole)},
                           month{static_cast<unsigned>(parse_int(text.substr(5, 2), whole))},
                           day{static_cast<unsigned>(parse_int(text.substr(8, 2), whole))}};
  if (!ymd.ok()) throw FormatError("invalid calendar date '" + std::string(whole) + "'");
  return sys_days{ymd};
}

}  // namespace

Date parse_date(std::string_view text) { return make_date(text, text); }

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

TimePoint parse_timestamp(std::string_view text) {
  std::string_view s = text;
  if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.remove_suffix(1);
  if (s.size() < 10) throw FormatError("bad timestamp '" + std::string(text) + "'");
  const Date d = make_date(s.substr(0, 10), text);
  TimePoint t{d};
  if (s.size() == 10) return t;
  if (s[10] != 'T' && s[10] != ' ') throw FormatError("bad timestamp '" + std::string(text) + "'");
  const std::string_view clock = s.substr(11);
  if (clock.size() != 5 && clock.size() != 8) {
    throw FormatError("bad timestamp '" + std::string(text) + "'");
  }
  if (clock[2] != ':' || (clock.size() == 8 && clock[5] != ':')) {
    throw FormatError("bad timestamp '" + std::string(text) + "'");
  }
  const int hh = parse_int(clock.substr(0, 2), text);
  const int mm = parse_int(clock.substr(3, 2), text);
  const int ss = clock.size() == 8 ? parse_int(clock.substr(6, 2), text) : 0;
  if (hh > 23 || mm > 59 || ss > 59) throw FormatError("bad clock time in '" + std::string(text) + "'");
  return t + std::chrono::hours{hh} + std::chrono::minutes{mm} + std::chrono::seconds{ss};
}

std::string format_timestamp(TimePoint t) {
  const Date d = day_of(t);
  const auto secs = (t - TimePoint{d}).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02lld:%02lld:%02lldZ", format_date(d).c_str(),
                static_cast<long long>(secs / 3600), static_cast<long long>((secs / 60) % 60),
                static_cast<long long>(secs % 60));
  return buf;
}

int year_of(Date d) { return static_cast<int>(std::chrono::year_month_day{d}.year()); }

unsigned days_in_month(int year, unsigned month) {
  using namespace std::chrono;
  const year_month_day_last last{std::chrono::year{year}, month_day_last{std::chrono::month{month}}};
  return static_cast<unsigned>(last.day());
}

std::size_t day_count(Date first, Date last) {
  if (last < first) return 0;
  return static_cast<std::size_t>((last - first).count()) + 1;
}

}  // namespace methanet
