#pragma once

// Calendar arithmetic for the activity monitor: UTC timestamps, ISO-8601
// week periods (YYYYWW), minute-of-day buckets and the ordered period lists
// that drive the training window.

#include <algorithm>
#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace astdmon {

class CalendarError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// MinuteOfDay
// ---------------------------------------------------------------------------

inline constexpr int kMinutesPerDay = 1440;

class MinuteOfDay {
 public:
  constexpr MinuteOfDay() = default;
  constexpr explicit MinuteOfDay(int value) : value_(static_cast<std::uint16_t>(value)) {
    if (value < 0 || value >= kMinutesPerDay) {
      throw CalendarError("minute of day out of range: " + std::to_string(value));
    }
  }

  constexpr int value() const noexcept { return value_; }

  friend constexpr auto operator<=>(MinuteOfDay, MinuteOfDay) = default;

 private:
  std::uint16_t value_ = 0;
};

// ---------------------------------------------------------------------------
// Timestamp: UTC instant, textual form exactly "YYYY-mm-ddTHH:MM:ssZ".
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::chrono::sys_days kIsoEpochMonday =
    std::chrono::sys_days{std::chrono::year{1969} / std::chrono::December / 29};

constexpr bool parse_fixed_digits(std::string_view text, std::size_t pos, std::size_t len,
                                  int& out) noexcept {
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    const char c = text[i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

inline void append_padded(std::string& out, int value, int width) {
  std::string digits = std::to_string(value);
  if (static_cast<int>(digits.size()) < width) out.append(width - digits.size(), '0');
  out += digits;
}

// Monday that starts ISO week 1 of `iso_year`.
inline std::chrono::sys_days iso_week1_monday(int iso_year) {
  using namespace std::chrono;
  const sys_days jan4{year{iso_year} / January / 4};
  return jan4 - days{weekday{jan4}.iso_encoding() - 1};
}

}  // namespace detail

class Timestamp {
 public:
  using clock_point = std::chrono::sys_seconds;

  constexpr Timestamp() = default;
  constexpr explicit Timestamp(clock_point tp) : tp_(tp) {}

  static Timestamp from_unix_seconds(std::int64_t secs) {
    return Timestamp{clock_point{std::chrono::seconds{secs}}};
  }

  // Strict parse; rejects anything that is not a real calendar instant in
  // years 1970..9999 written exactly as YYYY-mm-ddTHH:MM:ssZ.
  static std::optional<Timestamp> try_parse(std::string_view text) noexcept {
    using namespace std::chrono;
    if (text.size() != 20 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
        text[13] != ':' || text[16] != ':' || text[19] != 'Z') {
      return std::nullopt;
    }
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    if (!detail::parse_fixed_digits(text, 0, 4, y) || !detail::parse_fixed_digits(text, 5, 2, mo) ||
        !detail::parse_fixed_digits(text, 8, 2, d) || !detail::parse_fixed_digits(text, 11, 2, h) ||
        !detail::parse_fixed_digits(text, 14, 2, mi) ||
        !detail::parse_fixed_digits(text, 17, 2, s)) {
      return std::nullopt;
    }
    if (y < 1970 || h > 23 || mi > 59 || s > 59) return std::nullopt;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                             day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return Timestamp{sys_days{ymd} + hours{h} + minutes{mi} + seconds{s}};
  }

  static Timestamp parse(std::string_view text) {
    if (auto ts = try_parse(text)) return *ts;
    throw CalendarError("bad timestamp: '" + std::string(text) + "'");
  }

  std::string render() const {
    using namespace std::chrono;
    const sys_days day_point = floor<days>(tp_);
    const year_month_day ymd{day_point};
    const hh_mm_ss tod{tp_ - day_point};
    std::string out;
    out.reserve(20);
    detail::append_padded(out, static_cast<int>(ymd.year()), 4);
    out += '-';
    detail::append_padded(out, static_cast<int>(static_cast<unsigned>(ymd.month())), 2);
    out += '-';
    detail::append_padded(out, static_cast<int>(static_cast<unsigned>(ymd.day())), 2);
    out += 'T';
    detail::append_padded(out, static_cast<int>(tod.hours().count()), 2);
    out += ':';
    detail::append_padded(out, static_cast<int>(tod.minutes().count()), 2);
    out += ':';
    detail::append_padded(out, static_cast<int>(tod.seconds().count()), 2);
    out += 'Z';
    return out;
  }

  constexpr clock_point time_point() const noexcept { return tp_; }
  constexpr std::int64_t unix_seconds() const noexcept { return tp_.time_since_epoch().count(); }

  friend constexpr auto operator<=>(const Timestamp&, const Timestamp&) = default;

 private:
  clock_point tp_{};
};

// ---------------------------------------------------------------------------
// Period: ISO-8601 week key, encoded YYYYWW.
// ---------------------------------------------------------------------------

inline int iso_weeks_in_year(int iso_year) {
  using namespace std::chrono;
  // Dec 28 always falls in the last ISO week of its year.
  const sys_days dec28{year{iso_year} / December / 28};
  return static_cast<int>((dec28 - detail::iso_week1_monday(iso_year)).count() / 7 + 1);
}

class Period {
 public:
  constexpr Period() = default;

  static Period from_year_week(int iso_year, int week) {
    if (iso_year < 1970 || iso_year > 9999) {
      throw CalendarError("period year out of range: " + std::to_string(iso_year));
    }
    if (week < 1 || week > iso_weeks_in_year(iso_year)) {
      throw CalendarError("period week out of range: " + std::to_string(iso_year) + "W" +
                          std::to_string(week));
    }
    return Period{iso_year * 100 + week};
  }

  static Period from_encoded(int yyyyww) { return from_year_week(yyyyww / 100, yyyyww % 100); }

  // Inverse of week_serial().
  static Period from_week_serial(std::int64_t serial);

  constexpr int encoded() const noexcept { return value_; }
  constexpr int year() const noexcept { return value_ / 100; }
  constexpr int week() const noexcept { return value_ % 100; }

  // Weeks elapsed since ISO week 1970-W01.
  std::int64_t week_serial() const {
    const auto monday = detail::iso_week1_monday(year()) + std::chrono::weeks{week() - 1};
    return (monday - detail::kIsoEpochMonday).count() / 7;
  }

  // Chronological for valid ISO periods; distances must still go through
  // week_distance().
  friend constexpr auto operator<=>(Period, Period) = default;

 private:
  constexpr explicit Period(int value) : value_(value) {}
  int value_ = 197001;
};

inline Period compute_period(Timestamp ts) {
  using namespace std::chrono;
  const sys_days d = floor<days>(ts.time_point());
  const sys_days thursday = d + days{4 - static_cast<int>(weekday{d}.iso_encoding())};
  const int iso_year = static_cast<int>(year_month_day{thursday}.year());
  const sys_days jan1{year{iso_year} / January / 1};
  const int week = static_cast<int>((thursday - jan1).count() / 7 + 1);
  return Period::from_year_week(iso_year, week);
}

inline Period compute_period(std::string_view text) { return compute_period(Timestamp::parse(text)); }

inline Period Period::from_week_serial(std::int64_t serial) {
  const auto monday = detail::kIsoEpochMonday + std::chrono::weeks{serial};
  return compute_period(Timestamp{std::chrono::sys_seconds{monday}});
}

inline MinuteOfDay compute_minute(Timestamp ts) {
  using namespace std::chrono;
  const auto since_midnight = ts.time_point() - floor<days>(ts.time_point());
  return MinuteOfDay{static_cast<int>(duration_cast<minutes>(since_midnight).count())};
}

inline MinuteOfDay compute_minute(std::string_view text) { return compute_minute(Timestamp::parse(text)); }

// Signed number of calendar weeks from `earlier` to `later`.
inline std::int64_t week_distance(Period earlier, Period later) {
  return later.week_serial() - earlier.week_serial();
}

// ---------------------------------------------------------------------------
// Period lists and per-week event buckets
// ---------------------------------------------------------------------------

using PeriodList = std::vector<Period>;
using MinuteList = std::vector<MinuteOfDay>;
using EventsByWeek = std::map<Period, MinuteList>;

inline constexpr int kDefaultMaxGapWeeks = 3;

// Ordered insert into a strictly ascending list. A period that would become
// the new head and lies more than `max_gap_weeks` before the current head is
// rejected as stale. Returns whether the list changed.
inline bool insert_period(PeriodList& list, Period p, int max_gap_weeks = kDefaultMaxGapWeeks) {
  const auto it = std::upper_bound(list.begin(), list.end(), p);
  if (it == list.begin() && it != list.end()) {
    if (week_distance(p, *it) > max_gap_weeks) return false;
  }
  list.insert(it, p);
  return true;
}

inline bool contains(std::span<const Period> list, Period p) {
  return std::find(list.begin(), list.end(), p) != list.end();
}

inline std::size_t count_events(const EventsByWeek& events_by_week, std::span<const Period> periods) {
  std::size_t total = 0;
  for (const Period p : periods) {
    if (const auto it = events_by_week.find(p); it != events_by_week.end()) total += it->second.size();
  }
  return total;
}

}  // namespace astdmon
