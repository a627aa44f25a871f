// monitor: streaming per-user activity-time anomaly detection.
//
//   monitor run --input <path|-> [--config <path>] [--alerts <path|->]
//               [--state-in <path>] [--state-out <path>] [--workers N] [--stats]
//   monitor replay-trace
//   monitor generate --output <path|-> [--events N] [--users N] [--weeks N] [--seed S]
//
// Exit codes: 0 success, 1 input/output failure, 2 invalid configuration or usage.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "astdmon/config.hpp"
#include "astdmon/engine.hpp"
#include "astdmon/snapshot.hpp"
#include "astdmon/synthetic.hpp"
#include "astdmon/trace.hpp"

namespace {

using namespace astdmon;

constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;

struct RunOptions {
  std::string input;
  std::string config_path;
  std::string alerts_path = "-";
  std::string state_in;
  std::string state_out;
  std::size_t workers = 1;
  bool stats = false;
  bool log_malformed = false;

  std::optional<int> n;
  std::optional<int> k;
  std::optional<double> threshold;
  std::optional<int> max_gap_weeks;
  std::optional<std::string> bandwidth_method;
  std::optional<double> bandwidth_value;
  std::optional<bool> circular;
};

DetectorConfig resolve_config(const RunOptions& o, DetectorConfig base) {
  if (!o.config_path.empty()) base = load_config_file(o.config_path, base);
  if (o.n) base.n = *o.n;
  if (o.k) base.k = *o.k;
  if (o.threshold) base.threshold = *o.threshold;
  if (o.max_gap_weeks) base.max_gap_weeks = *o.max_gap_weeks;
  if (o.bandwidth_method) apply_setting(base, "bandwidth.method", *o.bandwidth_method);
  if (o.bandwidth_value) base.bandwidth.value = *o.bandwidth_value;
  if (o.circular) base.boundary = *o.circular ? BoundaryMode::circular : BoundaryMode::linear;
  base.validate();
  return base;
}

int run(const RunOptions& o) {
  std::optional<std::string> snapshot;
  DetectorConfig base;
  if (!o.state_in.empty()) {
    try {
      snapshot = read_text_file(o.state_in);
      base = snapshot_config(*snapshot);
    } catch (const std::exception& e) {
      std::cerr << "monitor: state " << o.state_in << ": " << e.what() << '\n';
      return kExitIo;
    }
  }

  DetectorConfig config;
  try {
    config = resolve_config(o, base);
  } catch (const ConfigError& e) {
    std::cerr << "monitor: invalid configuration: " << e.what() << '\n';
    return kExitConfig;
  }
  if (threshold_exceeds_uniform(config)) {
    std::cerr << "monitor: warning: threshold " << config.threshold
              << " is at or above the uniform density 1/1440; evenly spread activity is always flagged\n";
  }

  std::optional<Engine> engine;
  try {
    if (snapshot) {
      engine.emplace(restore_state(*snapshot, config, o.workers));
    } else {
      engine.emplace(config, o.workers);
    }
  } catch (const SnapshotError& e) {
    std::cerr << "monitor: state " << o.state_in << ": " << e.what() << '\n';
    return kExitIo;
  } catch (const ConfigError& e) {
    std::cerr << "monitor: invalid configuration: " << e.what() << '\n';
    return kExitConfig;
  }

  std::ifstream file_in;
  std::istream* in = &std::cin;
  if (o.input != "-") {
    file_in.open(o.input, std::ios::binary);
    if (!file_in) {
      std::cerr << "monitor: cannot read input '" << o.input << "'\n";
      return kExitIo;
    }
    in = &file_in;
  }

  std::ofstream file_out;
  std::ostream* out = &std::cout;
  if (o.alerts_path != "-") {
    file_out.open(o.alerts_path, std::ios::binary | std::ios::trunc);
    if (!file_out) {
      std::cerr << "monitor: cannot write alerts to '" << o.alerts_path << "'\n";
      return kExitIo;
    }
    out = &file_out;
  }

  JsonLinesAlertSink sink(*out);
  MonitorHooks hooks;
  hooks.alerts = &sink;
  if (o.log_malformed) {
    hooks.on_malformed = [](const MalformedLine& m) {
      std::cerr << "monitor: line " << m.line_no << ": " << m.reason << '\n';
    };
  }
  const RunStats stats = run_monitor(*in, *engine, hooks);
  if (in->bad()) {
    std::cerr << "monitor: read error on input\n";
    return kExitIo;
  }
  if (!*out) {
    std::cerr << "monitor: write error on alert output\n";
    return kExitIo;
  }

  if (!o.state_out.empty()) {
    try {
      write_text_file(o.state_out, dump_state(*engine));
    } catch (const std::exception& e) {
      std::cerr << "monitor: " << e.what() << '\n';
      return kExitIo;
    }
  }

  if (o.stats) {
    std::cerr << stats_json(stats) << '\n';
  } else {
    std::cerr << "monitor: " << stats.events_processed << " events (" << stats.events_malformed << " malformed), "
              << stats.users_seen << " users, " << stats.profiles_computed << " profiles, " << stats.alerts_emitted
              << " alerts\n";
  }
  return 0;
}

int replay_trace() {
  Detector detector(trace::golden_config());
  const trace::GoldenRun result = trace::replay_golden_trace(detector);
  trace::print(result, std::cout);
  return result.all_passed() ? 0 : 1;
}

int generate(const SyntheticCorpus& spec, const std::string& output) {
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (output != "-") {
    file.open(output, std::ios::binary | std::ios::trunc);
    if (!file) {
      std::cerr << "monitor: cannot write '" << output << "'\n";
      return kExitIo;
    }
    out = &file;
  }
  try {
    write_corpus(spec, *out);
  } catch (const ConfigError& e) {
    std::cerr << "monitor: " << e.what() << '\n';
    return kExitConfig;
  }
  out->flush();
  return *out ? 0 : kExitIo;
}

}  // namespace

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  CLI::App app{"Per-user activity-time anomaly detection over audit event streams"};
  app.require_subcommand(1);

  RunOptions ro;
  CLI::App* run_cmd = app.add_subcommand("run", "Process a line-delimited JSON event stream");
  run_cmd->add_option("--input", ro.input, "Event file, or - for standard input")->required();
  run_cmd->add_option("--config", ro.config_path, "Key/value configuration file");
  run_cmd->add_option("--alerts", ro.alerts_path, "Alert output file, or - for standard output");
  run_cmd->add_option("--state-in", ro.state_in, "Restore engine state before reading input");
  run_cmd->add_option("--state-out", ro.state_out, "Write engine state after the input is drained");
  run_cmd->add_option("--workers", ro.workers, "Shard count")->check(CLI::PositiveNumber);
  run_cmd->add_flag("--stats", ro.stats, "Print run statistics as JSON on standard error");
  run_cmd->add_flag("--log-malformed", ro.log_malformed, "Report each malformed line on standard error");
  run_cmd->add_option("--n", ro.n, "Minimum number of periods in the training window");
  run_cmd->add_option("--k", ro.k, "Minimum number of events in the training window");
  run_cmd->add_option("--threshold", ro.threshold, "Alert when density <= threshold");
  run_cmd->add_option("--max-gap-weeks", ro.max_gap_weeks, "Oldest accepted distance before the window head");
  run_cmd->add_option("--bandwidth-method", ro.bandwidth_method, "silverman or fixed");
  run_cmd->add_option("--bandwidth-value", ro.bandwidth_value, "Bandwidth in minutes for the fixed method");
  run_cmd->add_option("--circular", ro.circular, "Wrap the kernel around midnight (true/false)");

  CLI::App* trace_cmd = app.add_subcommand("replay-trace", "Replay the built-in 14-event reference trace");

  SyntheticCorpus corpus;
  std::string output = "-";
  CLI::App* gen_cmd = app.add_subcommand("generate", "Write a synthetic event corpus");
  gen_cmd->add_option("--output", output, "Output file, or - for standard output");
  gen_cmd->add_option("--events", corpus.events, "Number of events");
  gen_cmd->add_option("--users", corpus.users, "Number of users");
  gen_cmd->add_option("--weeks", corpus.weeks, "Number of weeks covered");
  gen_cmd->add_option("--seed", corpus.seed, "Random seed");
  gen_cmd->add_option("--late-fraction", corpus.late_fraction, "Share of events stamped in an earlier week");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (*run_cmd) return run(ro);
  if (*trace_cmd) return replay_trace();
  if (*gen_cmd) return generate(corpus, output);
  return kExitConfig;
}
