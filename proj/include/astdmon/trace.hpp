#pragma once

// Built-in reference walkthrough: one user, fourteen events whose periods
// exercise window filling, stale rejection, the first profile computation,
// accumulation and renewal (k = 10, n = 3, threshold = 0.001).

#include <cstddef>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "astdmon/detector.hpp"

namespace astdmon::trace {

inline constexpr const char* kUser = "trace-user";

inline DetectorConfig golden_config() {
  DetectorConfig c;
  c.n = 3;
  c.k = 10;
  c.threshold = 0.001;
  return c;
}

// Periods: 202225 x3, 202221, 202227 x3, 202228 x4, 202229 x2, 202226.
inline std::vector<AuditEvent> golden_events() {
  static constexpr const char* kTimes[] = {
      "2022-06-20T09:00:00Z", "2022-06-21T09:30:00Z", "2022-06-22T10:15:00Z",  // W25
      "2022-05-24T09:10:00Z",                                                  // W21, stale
      "2022-07-04T09:05:00Z", "2022-07-05T09:40:00Z", "2022-07-06T10:00:00Z",  // W27
      "2022-07-11T09:20:00Z", "2022-07-12T09:50:00Z", "2022-07-13T10:05:00Z",  // W28
      "2022-07-14T09:35:00Z",                                                  //
      "2022-07-18T09:25:00Z", "2022-07-19T03:00:00Z",                          // W29
      "2022-06-29T09:45:00Z",                                                  // W26, late
  };
  std::vector<AuditEvent> out;
  int i = 1;
  for (const char* t : kTimes) {
    out.push_back({(i < 10 ? "t0" : "t") + std::to_string(i), Timestamp::parse(t), kUser});
    ++i;
  }
  return out;
}

inline PeriodList periods_of(std::initializer_list<int> encoded) {
  PeriodList out;
  for (int e : encoded) out.push_back(Period::from_encoded(e));
  return out;
}

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline std::string describe(const EntityState& s) {
  std::ostringstream os;
  auto list = [&](const PeriodList& l) {
    os << '[';
    for (std::size_t i = 0; i < l.size(); ++i) {
      const auto it = s.events_by_week.find(l[i]);
      os << (i ? ", " : "") << l[i].encoded() << " (" << (it == s.events_by_week.end() ? 0 : it->second.size())
         << ')';
    }
    os << ']';
  };
  os << "UsedPeriods=";
  list(s.used_periods);
  os << " AccumulatedPeriods=";
  list(s.accumulated_periods);
  return os.str();
}

struct GoldenRun {
  std::vector<CheckResult> checks;
  std::vector<std::string> notes;
  std::vector<AlertRecord> alerts;

  bool all_passed() const {
    for (const auto& c : checks) {
      if (!c.passed) return false;
    }
    return true;
  }
};

inline std::size_t events_in(const EntityState& s, int period) {
  const auto it = s.events_by_week.find(Period::from_encoded(period));
  return it == s.events_by_week.end() ? 0 : it->second.size();
}

// Replays the walkthrough through `detector` (fresh, or restored mid-way when
// `first_event` > 0) and checks every checkpoint reached.
inline GoldenRun replay_golden_trace(Detector& detector, std::size_t first_event = 0) {
  GoldenRun run;
  const auto events = golden_events();
  std::size_t profiles_before = detector.profiles_computed();
  for (std::size_t i = first_event; i < events.size(); ++i) {
    if (auto alert = detector.process(events[i])) run.alerts.push_back(*alert);
    const std::size_t seen = i + 1;
    const EntityState s = *detector.entity_state(kUser);
    auto check = [&](std::string name, bool ok) { run.checks.push_back({std::move(name), ok, describe(s)}); };
    switch (seen) {
      case 3:
        check("C1 after events 1-3: UsedPeriods=[202225], AccumulatedPeriods=[]",
              s.used_periods == periods_of({202225}) && s.accumulated_periods.empty() && events_in(s, 202225) == 3);
        break;
      case 4:
        check("C2 after event 4 (202221): stale period rejected, lists unchanged",
              s.used_periods == periods_of({202225}) && s.accumulated_periods.empty() &&
                  week_distance(Period::from_encoded(202221), Period::from_encoded(202225)) == 4);
        break;
      case 11:
        check("C3 after events 5-11: UsedPeriods=[202225 (3), 202227 (3), 202228 (4)]",
              s.used_periods == periods_of({202225, 202227, 202228}) && s.accumulated_periods.empty() &&
                  events_in(s, 202225) == 3 && events_in(s, 202227) == 3 && events_in(s, 202228) == 4);
        break;
      case 12:
        check("C4 after event 12 (202229): profile computed, AccumulatedPeriods=[202229], 202221 purged",
              detector.profiles_computed() == profiles_before + 1 && !s.start_kde &&
                  s.accumulated_periods == periods_of({202229}) && s.user_kde.has_value() &&
                  s.user_kde->sample_count() == 10 && events_in(s, 202221) == 0 &&
                  s.used_periods == periods_of({202225, 202227, 202228}));
        break;
      case 13: {
        const std::size_t renewed = events_in(s, 202227) + events_in(s, 202228) + events_in(s, 202229);
        check("C5a after event 13 (202229): no renewal yet, AccumulatedPeriods=[202229 (2)]",
              s.used_periods == periods_of({202225, 202227, 202228}) &&
                  s.accumulated_periods == periods_of({202229}) && events_in(s, 202229) == 2 && renewed == 9);
        run.notes.push_back("divergence: the reference walkthrough renews the window at event 13, but NewPeriods "
                            "then holds " + std::to_string(renewed) + " events < k=" + std::to_string(s.k) +
                            "; renewal happens at event 14 instead");
        break;
      }
      case 14:
        check("C5b after event 14 (202226): late period inserted, window renewed to "
              "[202226 (1), 202227 (3), 202228 (4), 202229 (2)]",
              s.used_periods == periods_of({202226, 202227, 202228, 202229}) && s.accumulated_periods.empty() &&
                  events_in(s, 202226) == 1 && events_in(s, 202227) == 3 && events_in(s, 202228) == 4 &&
                  events_in(s, 202229) == 2 && events_in(s, 202225) == 0 && detector.profiles_computed() == 1);
        break;
      default:
        break;
    }
  }
  return run;
}

inline void print(const GoldenRun& run, std::ostream& os) {
  for (const auto& c : run.checks) {
    os << (c.passed ? "PASS " : "FAIL ") << c.name << "\n     observed " << c.detail << '\n';
  }
  for (const auto& n : run.notes) os << "note " << n << '\n';
  os << "alerts:";
  for (const auto& a : run.alerts) os << ' ' << a.event_id << "(minute " << a.minute.value() << ')';
  os << '\n';
}

}  // namespace astdmon::trace
