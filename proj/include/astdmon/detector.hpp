#pragma once

// Per-user point-anomaly detector.
//
// Composition: a quantified interleave over userId whose child is
//   flow(Computation, Alerting)
// Computation is a one-state automaton whose loop transition runs addEvent
// and whose node action runs Computation_KDE. Alerting is a one-state
// automaton whose loop transition, guarded by "profile exists", runs alert.
// All per-user state lives in attributes of the flow node so both automata
// share it and users never see each other's state.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "astdmon/astd.hpp"
#include "astdmon/calendar.hpp"
#include "astdmon/kde.hpp"

namespace astdmon {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BandwidthPolicy {
  enum class Method { silverman, fixed };
  Method method = Method::silverman;
  double value = kMinBandwidth;  // fixed width; ignored by silverman

  friend bool operator==(const BandwidthPolicy&, const BandwidthPolicy&) = default;
};

struct DetectorConfig {
  int n = 3;
  int k = 10;
  double threshold = 0.001;
  int max_gap_weeks = kDefaultMaxGapWeeks;
  BandwidthPolicy bandwidth;
  BoundaryMode boundary = BoundaryMode::linear;

  void validate() const {
    if (n < 1) throw ConfigError("n must be >= 1");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (!(threshold > 0.0)) throw ConfigError("threshold must be > 0");
    if (max_gap_weeks < 0) throw ConfigError("max_gap_weeks must be >= 0");
    if (bandwidth.method == BandwidthPolicy::Method::fixed && !(bandwidth.value > 0.0)) {
      throw ConfigError("fixed bandwidth must be > 0");
    }
  }

  friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

// ---------------------------------------------------------------------------
// Entity state
// ---------------------------------------------------------------------------

namespace attr {
inline constexpr std::string_view kEventsByWeek = "EventsByWeek";
inline constexpr std::string_view kN = "n";
inline constexpr std::string_view kK = "k";
inline constexpr std::string_view kThreshold = "threshold";
inline constexpr std::string_view kUsedPeriods = "UsedPeriods";
inline constexpr std::string_view kAccumulatedPeriods = "AccumulatedPeriods";
inline constexpr std::string_view kStartKde = "startKDE";
inline constexpr std::string_view kUserKde = "UserKDE";
inline constexpr std::string_view kAlerts = "Alerts";
}  // namespace attr

using AlertIds = std::vector<std::string>;

// View over one user's attributes, wherever they are stored.
struct EntityStateRef {
  EventsByWeek& events_by_week;
  const int& n;
  const int& k;
  const double& threshold;
  PeriodList& used_periods;
  PeriodList& accumulated_periods;
  bool& start_kde;
  std::optional<KdeProfile>& user_kde;
  AlertIds& alerts;
};

struct EntityState {
  EventsByWeek events_by_week;
  int n = 3;
  int k = 10;
  double threshold = 0.001;
  PeriodList used_periods;
  PeriodList accumulated_periods;
  bool start_kde = false;
  std::optional<KdeProfile> user_kde;
  AlertIds alerts;

  static EntityState fresh(const DetectorConfig& config) {
    EntityState s;
    s.n = config.n;
    s.k = config.k;
    s.threshold = config.threshold;
    return s;
  }

  EntityStateRef ref() {
    return {events_by_week, n, k, threshold, used_periods, accumulated_periods, start_kde, user_kde, alerts};
  }

  friend bool operator==(const EntityState&, const EntityState&) = default;
};

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

// Training-window bookkeeping for one event (addEvent).
inline void add_event(EntityStateRef s, Period period, MinuteOfDay minute,
                      int max_gap_weeks = kDefaultMaxGapWeeks) {
  s.events_by_week[period].push_back(minute);

  auto& used = s.used_periods;
  auto& acc = s.accumulated_periods;
  const std::size_t used_count = count_events(s.events_by_week, used);
  const bool window_filling = used.empty() || used_count < static_cast<std::size_t>(s.k) ||
                              used.size() < static_cast<std::size_t>(s.n) || period <= used.back();
  if (window_filling) {
    if (!contains(used, period)) insert_period(used, period, max_gap_weeks);
  } else if (!contains(used, period)) {
    if (acc.empty()) s.start_kde = true;
    if (!contains(acc, period)) insert_period(acc, period, max_gap_weeks);
  }

  // Renewal: NewPeriods = UsedPeriods minus its head, plus AccumulatedPeriods.
  if (used.empty()) return;
  const std::size_t acc_count = count_events(s.events_by_week, acc);
  const std::size_t head_count = count_events(s.events_by_week, std::span(used).first(1));
  const std::size_t renewed_count = count_events(s.events_by_week, used) - head_count + acc_count;
  if (renewed_count >= static_cast<std::size_t>(s.k) && acc_count >= 2 &&
      used.size() >= static_cast<std::size_t>(s.n)) {
    s.events_by_week.erase(used.front());
    used.erase(used.begin());
    used.insert(used.end(), acc.begin(), acc.end());
    acc.clear();
  }
}

// Refits the profile when the window manager asked for it (Computation_KDE).
// Returns whether a profile was computed.
inline bool computation_kde(EntityStateRef s, const BandwidthPolicy& bandwidth = {},
                            BoundaryMode boundary = BoundaryMode::linear) {
  if (!s.start_kde) return false;
  s.user_kde.reset();
  std::erase_if(s.events_by_week, [&](const auto& entry) {
    return !contains(s.used_periods, entry.first) && !contains(s.accumulated_periods, entry.first);
  });
  const TrainingSample sample = fuse_samples(s.events_by_week, s.used_periods);
  if (sample.empty()) throw std::logic_error("profile computation requested over an empty training window");
  const double h = bandwidth.method == BandwidthPolicy::Method::fixed ? bandwidth.value : select_bandwidth(sample);
  s.user_kde = fit_profile(sample, h, boundary);
  s.start_kde = false;
  return true;
}

// Classifies one event against the current profile (alert). Returns the
// density when the event was flagged.
inline std::optional<double> alert_check(EntityStateRef s, std::string_view event_id, MinuteOfDay minute) {
  if (!s.user_kde) return std::nullopt;
  const double density = density_at(*s.user_kde, minute);
  if (classify_minute(*s.user_kde, minute, s.threshold) != Verdict::anomalous) return std::nullopt;
  s.alerts.emplace_back(event_id);
  return density;
}

// Returns human-readable violations of the per-user invariants; empty if
// the state is consistent.
inline std::vector<std::string> check_invariants(const EntityState& s) {
  std::vector<std::string> out;
  auto strictly_ascending = [](const PeriodList& l) {
    return std::adjacent_find(l.begin(), l.end(), [](Period a, Period b) { return !(a < b); }) == l.end();
  };
  if (!strictly_ascending(s.used_periods)) out.emplace_back("UsedPeriods not strictly ascending");
  if (!strictly_ascending(s.accumulated_periods)) out.emplace_back("AccumulatedPeriods not strictly ascending");
  for (const Period p : s.accumulated_periods) {
    if (contains(s.used_periods, p)) out.emplace_back("UsedPeriods and AccumulatedPeriods overlap");
    if (!s.used_periods.empty() && !(s.used_periods.back() < p)) {
      out.emplace_back("accumulated period not after the last used period");
    }
  }
  if (s.start_kde) out.emplace_back("startKDE left raised between steps");
  if (s.user_kde && s.user_kde->densities().size() != KdeProfile::kGridSize) out.emplace_back("profile size");
  return out;
}

// ---------------------------------------------------------------------------
// Detector engine
// ---------------------------------------------------------------------------

struct AuditEvent {
  std::string id;
  Timestamp creation;
  std::string user_id;
};

struct AlertRecord {
  std::string event_id;
  std::string user_id;
  Period period;
  MinuteOfDay minute;
  double density = 0.0;
  double threshold = 0.0;

  friend bool operator==(const AlertRecord&, const AlertRecord&) = default;
};

namespace param {
inline constexpr const char* kUserId = "userId";
inline constexpr const char* kCreationTime = "CreationTime";
inline constexpr const char* kId = "ID";
}  // namespace param

inline constexpr const char* kEventLabel = "e";

inline astd::EventMessage to_message(const AuditEvent& ev) {
  astd::EventMessage msg(kEventLabel);
  msg.payload.reserve(3);
  msg.with(param::kUserId, ev.user_id)
      .with(param::kCreationTime, ev.creation.unix_seconds())
      .with(param::kId, ev.id);
  return msg;
}

inline EntityStateRef bind_state(const astd::Scope& scope) {
  return {scope.get<EventsByWeek>(attr::kEventsByWeek),
          scope.get<int>(attr::kN),
          scope.get<int>(attr::kK),
          scope.get<double>(attr::kThreshold),
          scope.get<PeriodList>(attr::kUsedPeriods),
          scope.get<PeriodList>(attr::kAccumulatedPeriods),
          scope.get<bool>(attr::kStartKde),
          scope.get<std::optional<KdeProfile>>(attr::kUserKde),
          scope.get<AlertIds>(attr::kAlerts)};
}

inline EntityStateRef bind_state(astd::AttributeStore& store) {
  return {store.get<EventsByWeek>(attr::kEventsByWeek),
          store.get<int>(attr::kN),
          store.get<int>(attr::kK),
          store.get<double>(attr::kThreshold),
          store.get<PeriodList>(attr::kUsedPeriods),
          store.get<PeriodList>(attr::kAccumulatedPeriods),
          store.get<bool>(attr::kStartKde),
          store.get<std::optional<KdeProfile>>(attr::kUserKde),
          store.get<AlertIds>(attr::kAlerts)};
}

// The composition tree, referencing actions by name.
inline astd::AstdNode detector_spec() {
  using namespace astd;
  AstdNode computation =
      automaton("Computation", {"S0"}, "S0", {{"S0", "S0", kEventLabel, "", "addEvent"}}).with_action("Computation_KDE");
  AstdNode alerting = automaton("Alerting", {"S1"}, "S1", {{"S1", "S1", kEventLabel, "g3", "alert"}});
  AstdNode body = flow("Detect_Anomalous_Event_Times", std::move(computation), std::move(alerting));
  for (const std::string_view name : {attr::kEventsByWeek, attr::kN, attr::kK, attr::kThreshold, attr::kUsedPeriods,
                                      attr::kAccumulatedPeriods, attr::kStartKde, attr::kUserKde, attr::kAlerts}) {
    body.attributes.push_back({std::string(name), "init_" + std::string(name)});
  }
  return interleave("Detector", param::kUserId, std::move(body));
}

class Detector {
 public:
  explicit Detector(DetectorConfig config)
      : config_(validated(config)), telemetry_(std::make_unique<Telemetry>()), runtime_(build(config_, telemetry_.get())) {}

  Detector(Detector&&) noexcept = default;
  Detector& operator=(Detector&&) noexcept = default;

  // Delivers one event; returns the alert it raised, if any.
  std::optional<AlertRecord> process(const AuditEvent& ev) {
    telemetry_->pending.reset();
    runtime_.step_quiet(to_message(ev));
    return std::exchange(telemetry_->pending, std::nullopt);
  }

  // As process(), also returning the runtime's execution report.
  astd::StepReport process_traced(const AuditEvent& ev, std::optional<AlertRecord>* alert = nullptr) {
    telemetry_->pending.reset();
    astd::StepReport report = runtime_.step(to_message(ev));
    if (alert != nullptr) *alert = telemetry_->pending;
    telemetry_->pending.reset();
    return report;
  }

  bool can_execute(const AuditEvent& ev) const { return runtime_.can_execute(to_message(ev)); }

  const DetectorConfig& config() const noexcept { return config_; }
  std::size_t user_count() const noexcept { return runtime_.root().children().size(); }
  std::size_t profiles_computed() const noexcept { return telemetry_->profiles_computed; }

  // Users in first-seen order.
  std::vector<std::string> users() const {
    std::vector<std::string> out;
    for (const auto& key : runtime_.root().keys()) out.push_back(std::get<std::string>(key));
    return out;
  }

  std::optional<EntityState> entity_state(const std::string& user_id) const {
    const astd::Instance* child = runtime_.root().find_child(astd::ParamValue{user_id});
    if (child == nullptr) return std::nullopt;
    auto& store = const_cast<astd::AttributeStore&>(child->attributes());
    const EntityStateRef r = bind_state(store);
    EntityState s;
    s.events_by_week = r.events_by_week;
    s.n = r.n;
    s.k = r.k;
    s.threshold = r.threshold;
    s.used_periods = r.used_periods;
    s.accumulated_periods = r.accumulated_periods;
    s.start_kde = r.start_kde;
    s.user_kde = r.user_kde;
    s.alerts = r.alerts;
    return s;
  }

  // Installs a user's state wholesale (snapshot restore).
  void restore_entity(const std::string& user_id, EntityState state) {
    astd::AttributeStore& store = runtime_.instantiate(astd::ParamValue{user_id}).attributes();
    store.set(std::string(attr::kEventsByWeek), std::move(state.events_by_week));
    store.set(std::string(attr::kN), state.n);
    store.set(std::string(attr::kK), state.k);
    store.set(std::string(attr::kThreshold), state.threshold);
    store.set(std::string(attr::kUsedPeriods), std::move(state.used_periods));
    store.set(std::string(attr::kAccumulatedPeriods), std::move(state.accumulated_periods));
    store.set(std::string(attr::kStartKde), state.start_kde);
    store.set(std::string(attr::kUserKde), std::move(state.user_kde));
    store.set(std::string(attr::kAlerts), std::move(state.alerts));
  }

  void set_profiles_computed(std::size_t n) noexcept { telemetry_->profiles_computed = n; }

  astd::Runtime& runtime() noexcept { return runtime_; }
  const astd::Runtime& runtime() const noexcept { return runtime_; }

 private:
  struct Telemetry {
    std::optional<AlertRecord> pending;
    std::size_t profiles_computed = 0;
  };

  static const DetectorConfig& validated(const DetectorConfig& c) {
    c.validate();
    return c;
  }

  static astd::Runtime build(const DetectorConfig& config, Telemetry* telemetry) {
    using astd::EventMessage;
    using astd::Scope;
    astd::Registry reg;
    const EntityState initial = EntityState::fresh(config);
    reg.initializer("init_EventsByWeek", [](const Scope&) { return std::any(EventsByWeek{}); })
        .initializer("init_n", [n = initial.n](const Scope&) { return std::any(n); })
        .initializer("init_k", [k = initial.k](const Scope&) { return std::any(k); })
        .initializer("init_threshold", [t = initial.threshold](const Scope&) { return std::any(t); })
        .initializer("init_UsedPeriods", [](const Scope&) { return std::any(PeriodList{}); })
        .initializer("init_AccumulatedPeriods", [](const Scope&) { return std::any(PeriodList{}); })
        .initializer("init_startKDE", [](const Scope&) { return std::any(false); })
        .initializer("init_UserKDE", [](const Scope&) { return std::any(std::optional<KdeProfile>{}); })
        .initializer("init_Alerts", [](const Scope&) { return std::any(AlertIds{}); });

    const int max_gap = config.max_gap_weeks;
    reg.action("addEvent", [max_gap](const EventMessage& ev, const Scope& scope) {
      const Timestamp ts = Timestamp::from_unix_seconds(ev.get<std::int64_t>(param::kCreationTime));
      add_event(bind_state(scope), compute_period(ts), compute_minute(ts), max_gap);
    });
    reg.action("Computation_KDE", [telemetry, bw = config.bandwidth, mode = config.boundary](const EventMessage&,
                                                                                             const Scope& scope) {
      if (computation_kde(bind_state(scope), bw, mode)) ++telemetry->profiles_computed;
    });
    reg.guard("g3", [](const EventMessage&, const Scope& scope) {
      return scope.get<std::optional<KdeProfile>>(attr::kUserKde).has_value();
    });
    reg.action("alert", [telemetry](const EventMessage& ev, const Scope& scope) {
      const Timestamp ts = Timestamp::from_unix_seconds(ev.get<std::int64_t>(param::kCreationTime));
      const MinuteOfDay minute = compute_minute(ts);
      const EntityStateRef s = bind_state(scope);
      const std::string& id = ev.get<std::string>(param::kId);
      if (const auto density = alert_check(s, id, minute)) {
        telemetry->pending = AlertRecord{id, ev.get<std::string>(param::kUserId), compute_period(ts), minute,
                                         *density, s.threshold};
      }
    });
    return astd::Runtime::build(detector_spec(), std::move(reg));
  }

  DetectorConfig config_;
  std::unique_ptr<Telemetry> telemetry_;
  astd::Runtime runtime_;
};

inline Detector build_detector(const DetectorConfig& config) { return Detector(config); }

}  // namespace astdmon
