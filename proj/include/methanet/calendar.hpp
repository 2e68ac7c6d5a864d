#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace methanet {

using Date = std::chrono::sys_days;
using TimePoint = std::chrono::sys_seconds;

/// Parses `YYYY-MM-DD`. Throws FormatError on anything else.
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// Accepts `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM[:SS][Z]` and the same with a space separator.
TimePoint parse_timestamp(std::string_view text);
std::string format_timestamp(TimePoint t);

inline Date day_of(TimePoint t) { return std::chrono::floor<std::chrono::days>(t); }

int year_of(Date d);
unsigned days_in_month(int year, unsigned month);

/// Inclusive day count of [first, last]; zero when last < first.
std::size_t day_count(Date first, Date last);

struct DateRange {
  Date first;
  Date last;

  std::size_t size() const { return day_count(first, last); }
  bool contains(Date d) const { return d >= first && d <= last; }
};

}  // namespace methanet
