// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
// Usage: acceptance_test [--only N]...

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "astdmon/engine.hpp"
#include "astdmon/snapshot.hpp"
#include "astdmon/synthetic.hpp"
#include "astdmon/trace.hpp"
#include "kde_oracle.hpp"
#include "window_oracle.hpp"

#ifndef ASTDMON_MONITOR_PATH
#define ASTDMON_MONITOR_PATH "monitor"
#endif

namespace {

using namespace astdmon;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and budgets.
constexpr double kGoldenBudgetSeconds = 1.0;
constexpr int kOracleSamples = 200;
constexpr int kOracleMaxSampleSize = 5000;
constexpr double kOracleTolerance = 1e-12;
constexpr double kOracleBudgetSeconds = 60.0;
constexpr int kNormalizationSamples = 50;
constexpr int kConfinedLow = 200;
constexpr int kConfinedHigh = 1239;
constexpr double kConfinedMaxBandwidth = 30.0;
constexpr double kMassLow = 0.98;
constexpr double kMassHigh = 1.02;
constexpr double kMassCeiling = 1.0 + 1e-9;
constexpr int kSemanticSequences = 1000;
constexpr std::uint64_t kLoadEvents = 1'000'000;
constexpr std::uint32_t kLoadUsers = 100;
constexpr std::uint32_t kLoadWeeks = 12;
constexpr double kMinThroughput = 5000.0;
constexpr std::uint64_t kMaxPeakBytes = 500ull * 1024 * 1024;
constexpr std::uint64_t kSampleEvery = 100'000;
constexpr int kRobustLines = 10'000;
constexpr int kRobustMalformed = 1'000;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool passed = true;
  std::vector<std::string> details;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      details.push_back("violated: " + what);
    }
  }
  void info(const std::string& what) { details.push_back(what); }
};

std::string fmt(const char* pattern, double value) {
  char buf[96];
  std::snprintf(buf, sizeof buf, pattern, value);
  return buf;
}

std::filesystem::path scratch_dir() {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("astdmon-acceptance-" + std::to_string(static_cast<long long>(::getpid())));
  std::filesystem::create_directories(dir);
  return dir;
}

// --- 1 ---------------------------------------------------------------------

Outcome golden_trace() {
  Outcome out;
  const auto t0 = Clock::now();
  Detector detector(trace::golden_config());
  const trace::GoldenRun run = trace::replay_golden_trace(detector);
  const double elapsed = seconds_since(t0);

  std::ostringstream printed;
  trace::print(run, printed);
  std::istringstream lines(printed.str());
  for (std::string line; std::getline(lines, line);) out.info(line);

  out.expect(run.checks.size() == 6, "six checkpoints evaluated");
  out.expect(run.all_passed(), "checkpoints C1-C5");
  const bool logged = std::any_of(run.notes.begin(), run.notes.end(), [](const std::string& n) {
    return n.find("divergence") != std::string::npos && n.find("9 events") != std::string::npos;
  });
  out.expect(logged, "renewal divergence logged");
  out.expect(elapsed < kGoldenBudgetSeconds, "runtime < 1 s");
  out.info(fmt("runtime %.4f s", elapsed));
  return out;
}

// --- 2 ---------------------------------------------------------------------

TrainingSample uniform_sample(std::mt19937_64& rng, int m) {
  std::uniform_int_distribution<int> minute(0, kMinutesPerDay - 1);
  TrainingSample s;
  s.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) s.emplace_back(minute(rng));
  return s;
}

std::vector<TrainingSample> oracle_samples() {
  std::mt19937_64 rng(20220622);
  std::uniform_int_distribution<int> size(1, kOracleMaxSampleSize);
  std::vector<TrainingSample> out;
  for (int i = 0; i < kOracleSamples; ++i) out.push_back(uniform_sample(rng, size(rng)));
  return out;
}

std::vector<int> as_ints(const TrainingSample& s) {
  std::vector<int> out;
  for (const MinuteOfDay m : s) out.push_back(m.value());
  return out;
}

Outcome kde_oracle() {
  Outcome out;
  const auto t0 = Clock::now();
  double worst = 0.0;
  double worst_h = 0.0;
  for (const TrainingSample& sample : oracle_samples()) {
    const double h = select_bandwidth(sample);
    const double h_oracle = testing::oracle_silverman(as_ints(sample));
    worst_h = std::max(worst_h, std::abs(h - h_oracle) / h_oracle);
    const KdeProfile profile = fit_profile(sample, h);
    const std::vector<double> naive = testing::naive_kde(sample, h);
    for (std::size_t g = 0; g < naive.size(); ++g) {
      worst = std::max(worst, std::abs(profile.densities()[g] - naive[g]));
    }
  }
  const double elapsed = seconds_since(t0);
  out.expect(worst <= kOracleTolerance, "max |engine - naive| <= 1e-12");
  out.expect(worst_h <= 1e-12, "bandwidth matches the independent rule");
  out.expect(elapsed < kOracleBudgetSeconds, "runtime < 60 s");
  out.info(fmt("max abs density error %.3e", worst));
  out.info(fmt("max relative bandwidth error %.3e", worst_h));
  out.info(fmt("runtime %.2f s", elapsed));
  return out;
}

// --- 3 ---------------------------------------------------------------------

// Clustered activity inside the confined range; redrawn until the rule
// picks a narrow bandwidth.
TrainingSample confined_sample(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(200, 4000);
  std::uniform_int_distribution<int> clusters(1, 4);
  std::uniform_real_distribution<double> centre(kConfinedLow + 60.0, kConfinedHigh - 60.0);
  std::uniform_real_distribution<double> spread(5.0, 40.0);
  for (;;) {
    const int m = size(rng);
    const int c = clusters(rng);
    std::vector<std::normal_distribution<double>> parts;
    for (int i = 0; i < c; ++i) parts.emplace_back(centre(rng), spread(rng));
    TrainingSample s;
    for (int i = 0; i < m; ++i) {
      const double x = parts[static_cast<std::size_t>(i % c)](rng);
      s.emplace_back(std::clamp(static_cast<int>(std::lround(x)), kConfinedLow, kConfinedHigh));
    }
    if (select_bandwidth(s) <= kConfinedMaxBandwidth) return s;
  }
}

Outcome normalization() {
  Outcome out;
  std::mt19937_64 rng(1239);
  double lo = 2.0, hi = 0.0, ceiling = 0.0;
  for (int i = 0; i < kNormalizationSamples; ++i) {
    const TrainingSample s = confined_sample(rng);
    const KdeProfile p = fit_profile(s, select_bandwidth(s));
    const double mass = std::accumulate(p.densities().begin(), p.densities().end(), 0.0);
    lo = std::min(lo, mass);
    hi = std::max(hi, mass);
    ceiling = std::max(ceiling, mass);
  }
  out.expect(lo >= kMassLow && hi <= kMassHigh, "confined samples: grid mass in [0.98, 1.02]");
  out.info(fmt("confined mass min %.12f", lo) + fmt(" max %.12f", hi));

  for (const TrainingSample& s : oracle_samples()) {
    for (const BoundaryMode mode : {BoundaryMode::linear, BoundaryMode::circular}) {
      const KdeProfile p = fit_profile(s, select_bandwidth(s), mode);
      ceiling = std::max(ceiling, std::accumulate(p.densities().begin(), p.densities().end(), 0.0));
    }
  }
  out.expect(ceiling <= kMassCeiling, "every sample: grid mass <= 1 + 1e-9");
  out.info(fmt("largest grid mass over all %.0f fits: ", 50.0 + 2.0 * kOracleSamples) + fmt("%.15f", ceiling));
  return out;
}

// --- 4 ---------------------------------------------------------------------

struct RandomScenario {
  DetectorConfig config;
  std::vector<AuditEvent> events;
};

RandomScenario random_scenario(std::mt19937_64& rng) {
  RandomScenario sc;
  std::uniform_int_distribution<int> users(2, 5), n(1, 3), k(2, 12), length(20, 160), weeks(3, 9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  sc.config.n = n(rng);
  sc.config.k = k(rng);
  const double thresholds[] = {0.0002, 0.0005, 0.001, 0.003};
  sc.config.threshold = thresholds[rng() % 4];
  if (unit(rng) < 0.2) sc.config.boundary = BoundaryMode::circular;
  if (unit(rng) < 0.2) sc.config.bandwidth = {BandwidthPolicy::Method::fixed, 5.0 + 40.0 * unit(rng)};
  const int user_count = users(rng), span_weeks = weeks(rng), count = length(rng);

  std::vector<double> habit;
  for (int u = 0; u < user_count; ++u) habit.push_back(420.0 + 600.0 * unit(rng));
  const std::int64_t origin = Timestamp::parse("2022-05-02T00:00:00Z").unix_seconds();
  for (int i = 0; i < count; ++i) {
    const int u = static_cast<int>(rng() % static_cast<std::uint64_t>(user_count));
    std::int64_t day = static_cast<std::int64_t>(i) * span_weeks * 7 / count;
    if (unit(rng) < 0.15) day = std::max<std::int64_t>(0, day - 7 * static_cast<std::int64_t>(1 + rng() % 5));
    int minute = static_cast<int>(std::lround(std::normal_distribution<double>(habit[u], 45.0)(rng)));
    if (unit(rng) < 0.05) minute = static_cast<int>(rng() % kMinutesPerDay);
    minute = std::clamp(minute, 0, kMinutesPerDay - 1);
    sc.events.push_back({"s" + std::to_string(i), Timestamp::from_unix_seconds(origin + day * 86400 + minute * 60),
                         "u" + std::to_string(u)});
  }
  return sc;
}

// Checks that a step's action log runs transition actions before the node
// action of the same automaton, and Computation before Alerting.
bool bottom_up(const astd::StepReport& report, std::string* why) {
  std::vector<std::string> log;
  for (const auto& a : report.actions) log.push_back(std::string(a.node) + ":" + std::string(a.action));
  const std::vector<std::string> base = {"Computation:addEvent", "Computation:Computation_KDE"};
  const bool ok = log == base ||
                  log == std::vector<std::string>{"Computation:addEvent", "Computation:Computation_KDE",
                                                  "Alerting:alert"};
  if (!ok && why != nullptr) {
    *why = "";
    for (const auto& l : log) *why += l + " ";
  }
  const bool kinds = report.actions.size() < 2 ||
                     (report.actions[0].kind == astd::ActionRun::Kind::transition &&
                      report.actions[1].kind == astd::ActionRun::Kind::node);
  return ok && kinds;
}

Outcome runtime_semantics() {
  Outcome out;
  std::mt19937_64 rng(31337);
  std::size_t steps = 0, alerts = 0, profiles = 0, oracle_checked = 0;
  int failures = 0;
  auto fail = [&](const std::string& what) {
    if (++failures <= 5) out.expect(false, what);
    out.passed = false;
  };

  for (int seq = 0; seq < kSemanticSequences; ++seq) {
    const RandomScenario sc = random_scenario(rng);
    Detector mixed(sc.config);
    std::map<std::string, std::vector<std::string>> mixed_alerts;
    std::string stream;
    std::set<std::string> with_profile;

    const bool silverman = sc.config.bandwidth.method == BandwidthPolicy::Method::silverman &&
                           sc.config.boundary == BoundaryMode::linear;
    testing::OracleEngine oracle{sc.config.n, sc.config.k, sc.config.threshold, sc.config.max_gap_weeks, {}};

    for (const AuditEvent& ev : sc.events) {
      std::optional<AlertRecord> alert;
      const std::size_t before = mixed.profiles_computed();
      const astd::StepReport report = mixed.process_traced(ev, &alert);
      ++steps;
      std::string why;
      if (!report.executed) fail("event refused in sequence " + std::to_string(seq));
      if (!bottom_up(report, &why)) fail("action order in sequence " + std::to_string(seq) + ": " + why);

      const EntityState s = *mixed.entity_state(ev.user_id);
      if (const auto bad = check_invariants(s); !bad.empty()) fail("invariant: " + bad.front());
      if (mixed.profiles_computed() != before) {
        with_profile.insert(ev.user_id);
        ++profiles;
      }
      if (alert) {
        ++alerts;
        if (!with_profile.count(ev.user_id) || !s.user_kde) fail("alert before the first profile");
        if (!(alert->density <= alert->threshold)) fail("alert density above threshold");
        mixed_alerts[ev.user_id].push_back(alert->event_id);
        stream += alert_line(*alert) + "\n";
      }
      const bool has_alert_action = std::any_of(report.actions.begin(), report.actions.end(),
                                                [](const auto& a) { return a.action == "alert"; });
      if (has_alert_action != s.user_kde.has_value()) fail("g3 guard disagrees with the profile state");

      if (silverman) {
        const bool flagged = oracle.feed(ev.id, compute_period(ev.creation).encoded(),
                                         compute_minute(ev.creation).value(), ev.user_id);
        if (flagged != alert.has_value()) fail("straight-line oracle disagrees at " + ev.id);
        ++oracle_checked;
      }
    }

    // Isolation: each user's replay alone gives the same state and alerts.
    std::map<std::string, std::vector<AuditEvent>> by_user;
    for (const AuditEvent& ev : sc.events) by_user[ev.user_id].push_back(ev);
    for (const auto& [user, events] : by_user) {
      Detector alone(sc.config);
      std::vector<std::string> solo_alerts;
      for (const AuditEvent& ev : events) {
        if (auto a = alone.process(ev)) solo_alerts.push_back(a->event_id);
      }
      if (alone.entity_state(user) != mixed.entity_state(user)) fail("isolation: state of " + user);
      if (solo_alerts != mixed_alerts[user]) fail("isolation: alerts of " + user);
    }

    // Determinism: a second run yields the same bytes.
    Detector again(sc.config);
    std::string replay;
    for (const AuditEvent& ev : sc.events) {
      if (auto a = again.process(ev)) replay += alert_line(*a) + "\n";
    }
    if (replay != stream) fail("replay determinism in sequence " + std::to_string(seq));
    for (const auto& user : mixed.users()) {
      if (again.entity_state(user) != mixed.entity_state(user)) fail("replay state of " + user);
    }
  }
  out.info(std::to_string(kSemanticSequences) + " sequences, " + std::to_string(steps) + " steps, " +
           std::to_string(profiles) + " profile fits, " + std::to_string(alerts) + " alerts, " +
           std::to_string(oracle_checked) + " steps cross-checked against the straight-line oracle");
  return out;
}

// --- 5 ---------------------------------------------------------------------

Outcome load(const std::filesystem::path& dir) {
  Outcome out;
  const auto corpus = dir / "load.jsonl";
  {
    std::ofstream f(corpus, std::ios::binary);
    write_corpus(SyntheticCorpus{.events = kLoadEvents, .users = kLoadUsers, .weeks = kLoadWeeks}, f);
  }

  Engine engine(DetectorConfig{}, 1);
  std::map<std::string, std::set<Period>> since_profile;
  std::uint64_t processed = 0, samples = 0, profile_checks = 0;
  std::size_t widest_window = 0;
  std::uint64_t last_stored = 0;
  int failures = 0;
  auto fail = [&](const std::string& what) {
    if (++failures <= 5) out.expect(false, what);
    out.passed = false;
  };

  auto keys_outside = [](const EntityState& s) {
    std::vector<Period> extra;
    for (const auto& [p, minutes] : s.events_by_week) {
      if (!contains(s.used_periods, p) && !contains(s.accumulated_periods, p)) extra.push_back(p);
    }
    return extra;
  };

  MonitorHooks hooks;
  hooks.on_step = [&](const StepInfo& step) {
    ++processed;
    if (step.profile_computed) {
      ++profile_checks;
      const EntityState s = *step.detector.entity_state(step.event.user_id);
      if (!keys_outside(s).empty()) fail("EventsByWeek keys outside the window after a profile fit");
      since_profile[step.event.user_id].clear();
    } else {
      since_profile[step.event.user_id].insert(compute_period(step.event.creation));
    }
    if (processed % kSampleEvery != 0) return;
    ++samples;
    std::uint64_t stored = 0;
    for (const std::string& user : step.detector.users()) {
      const EntityState s = *step.detector.entity_state(user);
      for (const auto& [p, minutes] : s.events_by_week) stored += minutes.size();
      widest_window = std::max(widest_window, s.used_periods.size() + s.accumulated_periods.size());
      const auto& recent = since_profile[user];
      for (const Period p : keys_outside(s)) {
        if (!recent.count(p)) fail("stale key " + std::to_string(p.encoded()) + " survived a profile fit");
      }
    }
    last_stored = stored;
  };

  std::ifstream in(corpus, std::ios::binary);
  const RunStats stats = run_monitor(in, engine, hooks);
  std::filesystem::remove(corpus);

  out.expect(stats.events_processed == kLoadEvents, "all events processed");
  out.expect(stats.users_seen == kLoadUsers, "100 users");
  out.expect(stats.events_per_second() >= kMinThroughput, "throughput >= 5000 events/s");
  out.expect(stats.peak_rss_bytes > 0 && stats.peak_rss_bytes < kMaxPeakBytes, "peak resident memory < 500 MB");
  out.expect(samples == kLoadEvents / kSampleEvery, "boundedness sampled every 100000 events");
  out.expect(last_stored * 2 < kLoadEvents, "resident minutes at the last sample well below total events");
  out.info(fmt("throughput %.0f events/s", stats.events_per_second()) + fmt(" over %.2f s", stats.wall_seconds));
  out.info(fmt("peak resident memory %.1f MB (whole test process)",
               static_cast<double>(stats.peak_rss_bytes) / (1024.0 * 1024.0)));
  out.info(std::to_string(stats.profiles_computed) + " profile fits, " + std::to_string(stats.alerts_emitted) +
           " alerts, " + std::to_string(profile_checks) + " post-fit key checks, " + std::to_string(samples) +
           " samples; widest window " + std::to_string(widest_window) + " periods; resident minutes at last sample " +
           std::to_string(last_stored));
  return out;
}

// --- 6 ---------------------------------------------------------------------

Outcome snapshot_round_trip() {
  Outcome out;
  const auto events = trace::golden_events();

  Engine whole(trace::golden_config());
  std::vector<std::string> whole_alerts;
  for (const AuditEvent& ev : events) {
    if (auto a = whole.process(ev)) whole_alerts.push_back(alert_line(*a));
  }
  const std::string final_state = dump_state(whole);
  Detector reference(trace::golden_config());
  const trace::GoldenRun full = trace::replay_golden_trace(reference);

  for (std::size_t cut = 1; cut < events.size(); ++cut) {
    Engine first(trace::golden_config());
    std::vector<std::string> alerts;
    for (std::size_t i = 0; i < cut; ++i) {
      if (auto a = first.process(events[i])) alerts.push_back(alert_line(*a));
    }
    Engine second = restore_state(dump_state(first));
    const trace::GoldenRun tail = trace::replay_golden_trace(second.shard(0), cut);
    for (const AlertRecord& a : tail.alerts) alerts.push_back(alert_line(a));

    const std::string label = "cut after event " + std::to_string(cut);
    out.expect(dump_state(second) == final_state, label + ": final state identical");
    out.expect(alerts == whole_alerts, label + ": alert stream identical");
    out.expect(tail.all_passed(), label + ": remaining checkpoints pass");
    const auto suffix = std::vector<trace::CheckResult>(full.checks.end() - static_cast<long>(tail.checks.size()),
                                                        full.checks.end());
    bool same = tail.checks.size() <= full.checks.size();
    for (std::size_t i = 0; same && i < tail.checks.size(); ++i) {
      same = tail.checks[i].name == suffix[i].name && tail.checks[i].detail == suffix[i].detail;
    }
    out.expect(same, label + ": checkpoints identical to the uninterrupted run");
  }
  out.info("13 cut points, dump -> restore -> finish compared with the uninterrupted run");
  return out;
}

// --- 7 ---------------------------------------------------------------------

std::string malformed_line(std::mt19937_64& rng, int i) {
  const std::string id = "\"ID\":\"bad" + std::to_string(i) + "\"";
  switch (rng() % 10) {
    case 0: return "{" + id + ",\"UserId\":\"user-001\"}";
    case 1: return "{" + id + ",\"CreationTime\":\"2022-02-09 10:15\",\"UserId\":\"user-001\"}";
    case 2: return "{" + id + ",\"CreationTime\":\"2022-02-30T10:15:00Z\",\"UserId\":\"user-002\"}";
    case 3: return "{\"CreationTime\":\"2022-02-09T10:15:00Z\",\"UserId\":\"user-003\"}";
    case 4: return "{" + id + ",\"CreationTime\":\"2022-02-09T10:15:00Z\"}";
    case 5: return "{" + id + ",\"CreationTime\":\"2022-02-09T10:15:00Z\",\"UserId\":\"user-0";
    case 6: return "[1,2,3]";
    case 7: return "{" + id + ",\"CreationTime\":20220209,\"UserId\":\"user-004\"}";
    case 8: return "{" + id + ",\"CreationTime\":\"2022-02-09T10:15:00Z\",\"UserId\":\"\"}";
    default: return "this is not json at all";
  }
}

int run_cli(const std::string& args, const std::filesystem::path& err) {
  const std::string cmd = std::string("\"") + ASTDMON_MONITOR_PATH + "\" " + args + " 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome ingestion(const std::filesystem::path& dir) {
  Outcome out;
  std::mt19937_64 rng(77);
  std::vector<std::string> good;
  SyntheticGenerator gen(SyntheticCorpus{.events = kRobustLines - kRobustMalformed, .users = 20, .weeks = 8,
                                         .seed = 7});
  while (!gen.done()) good.push_back(event_line(gen.next()));

  std::vector<bool> bad_at(kRobustLines, false);
  for (int placed = 0; placed < kRobustMalformed;) {
    const auto pos = static_cast<std::size_t>(rng() % kRobustLines);
    if (bad_at[pos]) continue;
    bad_at[pos] = true;
    ++placed;
  }
  const auto mixed = dir / "mixed.jsonl", clean = dir / "clean.jsonl";
  {
    std::ofstream m(mixed, std::ios::binary), c(clean, std::ios::binary);
    std::size_t next_good = 0;
    for (int i = 0; i < kRobustLines; ++i) {
      if (bad_at[static_cast<std::size_t>(i)]) {
        m << malformed_line(rng, i) << '\n';
      } else {
        m << good[next_good] << '\n';
        c << good[next_good] << '\n';
        ++next_good;
      }
    }
  }

  const auto err = dir / "stderr.txt";
  const int code = run_cli("run --input \"" + mixed.string() + "\" --alerts \"" + (dir / "a_mixed.jsonl").string() +
                               "\" --state-out \"" + (dir / "s_mixed.json").string() + "\" --stats",
                           err);
  out.expect(code == 0, "exit code 0");
  const int clean_code = run_cli("run --input \"" + clean.string() + "\" --alerts \"" +
                                     (dir / "a_clean.jsonl").string() + "\" --state-out \"" +
                                     (dir / "s_clean.json").string() + "\"",
                                 dir / "stderr_clean.txt");
  out.expect(clean_code == 0, "clean run exit code 0");

  nlohmann::json stats;
  {
    std::ifstream e(err);
    for (std::string line; std::getline(e, line);) {
      if (!line.empty() && line.front() == '{') stats = nlohmann::json::parse(line, nullptr, false);
    }
  }
  out.expect(stats.is_object(), "stats printed");
  if (stats.is_object()) {
    out.expect(stats["events_read"] == kRobustLines, "events_read = 10000");
    out.expect(stats["events_malformed"] == kRobustMalformed, "events_malformed = 1000");
    out.expect(stats["events_processed"] == kRobustLines - kRobustMalformed, "events_processed = 9000");
    out.info("stats " + stats.dump());
  }

  try {
    const std::string state = read_text_file((dir / "s_mixed.json").string());
    const Engine restored = restore_state(state);
    std::size_t violations = 0;
    for (const std::string& user : restored.users()) violations += check_invariants(*restored.entity_state(user)).size();
    out.expect(violations == 0, "entity invariants hold");
    out.expect(state == read_text_file((dir / "s_clean.json").string()),
               "state identical to the run without malformed lines");
    out.expect(read_text_file((dir / "a_mixed.jsonl").string()) == read_text_file((dir / "a_clean.jsonl").string()),
               "alerts identical to the run without malformed lines");
    out.info(std::to_string(restored.users_seen()) + " users restored from the final state");
  } catch (const std::exception& e) {
    out.expect(false, std::string("state readable: ") + e.what());
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--only") only.insert(std::atoi(argv[++i]));
  }
  const auto dir = scratch_dir();

  struct Criterion {
    int number;
    const char* title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "golden trace checkpoints C1-C5 with divergence log", golden_trace},
      {2, "KDE matches the naive double loop within 1e-12", kde_oracle},
      {3, "grid normalization", normalization},
      {4, "runtime semantics over 1000 random multi-user sequences", runtime_semantics},
      {5, "1M-event synthetic load: throughput, memory, boundedness", [&] { return load(dir); }},
      {6, "snapshot round trip mid-trace", snapshot_round_trip},
      {7, "ingestion robustness with 10% malformed lines", [&] { return ingestion(dir); }},
  };

  bool all = true;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.number)) continue;
    Outcome result;
    const auto t0 = Clock::now();
    try {
      result = c.run();
    } catch (const std::exception& e) {
      result.expect(false, std::string("exception: ") + e.what());
    }
    all = all && result.passed;
    std::cout << (result.passed ? "PASS" : "FAIL") << " criterion " << c.number << ": " << c.title
              << fmt(" (%.2f s)", seconds_since(t0)) << '\n';
    for (const std::string& d : result.details) std::cout << "    " << d << '\n';
    std::cout.flush();
  }
  std::filesystem::remove_all(dir);
  return all ? 0 : 1;
}
