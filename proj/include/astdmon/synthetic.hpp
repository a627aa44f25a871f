#pragma once

// Deterministic synthetic audit corpus.
//
// Events advance through the covered weeks in input order. Each user works
// around a personal hour of the day; a small share of events arrive late
// (stamped up to five weeks in the past) and a smaller share fall at a random
// minute of the day.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "astdmon/detector.hpp"
#include "astdmon/ingest.hpp"

namespace astdmon {

struct SyntheticCorpus {
  std::uint64_t events = 1'000'000;
  std::uint32_t users = 100;
  std::uint32_t weeks = 12;
  std::uint64_t seed = 42;
  std::string first_monday = "2022-01-03T00:00:00Z";
  double late_fraction = 0.03;
  double random_minute_fraction = 0.005;
};

class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(const SyntheticCorpus& spec)
      : spec_(spec), rng_(spec.seed), origin_(Timestamp::parse(spec.first_monday).unix_seconds()) {
    if (spec.users == 0 || spec.weeks == 0) throw ConfigError("synthetic corpus needs users and weeks");
    std::uniform_real_distribution<double> center(7.5 * 60, 18.0 * 60);
    std::uniform_real_distribution<double> spread(25.0, 110.0);
    habits_.reserve(spec.users);
    for (std::uint32_t u = 0; u < spec.users; ++u) habits_.push_back({center(rng_), spread(rng_)});
  }

  bool done() const noexcept { return index_ >= spec_.events; }

  AuditEvent next() {
    const std::uint64_t i = index_++;
    const std::uint64_t total_days = std::uint64_t{spec_.weeks} * 7;
    std::int64_t day = static_cast<std::int64_t>(i * total_days / std::max<std::uint64_t>(spec_.events, 1));

    const auto user = static_cast<std::uint32_t>(pick_user_(rng_) % spec_.users);
    if (unit_(rng_) < spec_.late_fraction) {
      day -= 7 * static_cast<std::int64_t>(1 + pick_user_(rng_) % 5);
      day = std::max<std::int64_t>(day, 0);
    }
    int minute = 0;
    if (unit_(rng_) < spec_.random_minute_fraction) {
      minute = static_cast<int>(pick_user_(rng_) % kMinutesPerDay);
    } else {
      std::normal_distribution<double> habit(habits_[user].center, habits_[user].spread);
      minute = static_cast<int>(std::lround(habit(rng_)));
      minute = std::clamp(minute, 0, kMinutesPerDay - 1);
    }
    const std::int64_t second = static_cast<std::int64_t>(pick_user_(rng_) % 60);
    const std::int64_t stamp = origin_ + day * 86400 + minute * 60 + second;

    char id[32];
    std::snprintf(id, sizeof id, "ev-%07llu", static_cast<unsigned long long>(i + 1));
    char name[32];
    std::snprintf(name, sizeof name, "user-%03u", user);
    return AuditEvent{id, Timestamp::from_unix_seconds(stamp), name};
  }

 private:
  struct Habit {
    double center;
    double spread;
  };

  SyntheticCorpus spec_;
  std::mt19937_64 rng_;
  std::int64_t origin_;
  std::vector<Habit> habits_;
  std::uint64_t index_ = 0;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::uniform_int_distribution<std::uint64_t> pick_user_{};
};

// Writes the corpus as line-delimited JSON; returns the number of lines.
inline std::uint64_t write_corpus(const SyntheticCorpus& spec, std::ostream& out) {
  SyntheticGenerator gen(spec);
  std::uint64_t lines = 0;
  while (!gen.done()) {
    out << event_line(gen.next()) << '\n';
    ++lines;
  }
  return lines;
}

}  // namespace astdmon
