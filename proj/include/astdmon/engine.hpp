#pragma once

// Sharded detector engine and the streaming driver.
//
// Events are routed to shards by FNV-1a of the user id, so every user lives in
// exactly one shard and sees its events in input order.

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "astdmon/detector.hpp"
#include "astdmon/ingest.hpp"

namespace astdmon {

inline std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Engine {
 public:
  explicit Engine(const DetectorConfig& config, std::size_t shards = 1) : config_(config) {
    config_.validate();
    if (shards == 0) throw ConfigError("worker count must be >= 1");
    shards_.reserve(shards);
    for (std::size_t i = 0; i < shards; ++i) shards_.emplace_back(config_);
  }

  const DetectorConfig& config() const noexcept { return config_; }
  std::size_t shard_count() const noexcept { return shards_.size(); }
  std::size_t shard_of(std::string_view user_id) const noexcept { return fnv1a(user_id) % shards_.size(); }
  Detector& shard(std::size_t i) { return shards_.at(i); }
  const Detector& shard(std::size_t i) const { return shards_.at(i); }

  std::optional<AlertRecord> process(const AuditEvent& ev) { return shards_[shard_of(ev.user_id)].process(ev); }

  std::size_t users_seen() const {
    std::size_t total = 0;
    for (const Detector& d : shards_) total += d.user_count();
    return total;
  }

  std::size_t profiles_computed() const {
    std::size_t total = 0;
    for (const Detector& d : shards_) total += d.profiles_computed();
    return total;
  }

  // Sorted, so the listing does not depend on the shard count.
  std::vector<std::string> users() const {
    std::vector<std::string> out;
    for (const Detector& d : shards_) {
      auto part = d.users();
      out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::optional<EntityState> entity_state(const std::string& user_id) const {
    return shards_[shard_of(user_id)].entity_state(user_id);
  }

  void restore_entity(const std::string& user_id, EntityState state) {
    shards_[shard_of(user_id)].restore_entity(user_id, std::move(state));
  }

  // Spread over the shards; only the sum is meaningful.
  void set_profiles_computed(std::size_t n) {
    for (std::size_t i = 0; i < shards_.size(); ++i) shards_[i].set_profiles_computed(i == 0 ? n : 0);
  }

 private:
  DetectorConfig config_;
  std::vector<Detector> shards_;
};

// ---------------------------------------------------------------------------
// Sinks and statistics
// ---------------------------------------------------------------------------

class AlertSink {
 public:
  virtual ~AlertSink() = default;
  virtual void write(const AlertRecord& alert) = 0;
  virtual void flush() {}
};

class JsonLinesAlertSink final : public AlertSink {
 public:
  explicit JsonLinesAlertSink(std::ostream& out) : out_(out) {}
  void write(const AlertRecord& alert) override { out_ << alert_line(alert) << '\n'; }
  void flush() override { out_.flush(); }

 private:
  std::ostream& out_;
};

class CollectingAlertSink final : public AlertSink {
 public:
  void write(const AlertRecord& alert) override { alerts.push_back(alert); }
  std::vector<AlertRecord> alerts;
};

struct RunStats {
  std::uint64_t events_read = 0;
  std::uint64_t events_malformed = 0;
  std::uint64_t events_processed = 0;
  std::uint64_t users_seen = 0;
  std::uint64_t profiles_computed = 0;
  std::uint64_t alerts_emitted = 0;
  double wall_seconds = 0.0;
  std::uint64_t peak_rss_bytes = 0;

  double events_per_second() const noexcept {
    return wall_seconds > 0.0 ? static_cast<double>(events_processed) / wall_seconds : 0.0;
  }
};

// Peak resident set size of this process (VmHWM), or 0 where unavailable.
inline std::uint64_t peak_rss_bytes() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::uint64_t kb = 0;
      for (const char c : line) {
        if (c >= '0' && c <= '9') kb = kb * 10 + static_cast<std::uint64_t>(c - '0');
      }
      return kb * 1024;
    }
  }
  return 0;
}

inline std::string stats_json(const RunStats& s) {
  nlohmann::ordered_json j;
  j["events_read"] = s.events_read;
  j["events_malformed"] = s.events_malformed;
  j["events_processed"] = s.events_processed;
  j["users_seen"] = s.users_seen;
  j["profiles_computed"] = s.profiles_computed;
  j["alerts_emitted"] = s.alerts_emitted;
  j["wall_seconds"] = s.wall_seconds;
  j["events_per_second"] = s.events_per_second();
  j["peak_rss_bytes"] = s.peak_rss_bytes;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

struct MalformedLine {
  std::uint64_t line_no = 0;
  std::string reason;
};

struct StepInfo {
  const Detector& detector;
  const AuditEvent& event;
  const std::optional<AlertRecord>& alert;
  bool profile_computed;
};

struct MonitorHooks {
  AlertSink* alerts = nullptr;
  std::function<void(const MalformedLine&)> on_malformed = {};
  // Called after every processed event. With several workers it runs on the
  // worker threads, one call at a time.
  std::function<void(const StepInfo&)> on_step = {};
  std::size_t batch_size = 1024;
};

namespace detail {

class BatchQueue {
 public:
  explicit BatchQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(std::vector<AuditEvent> batch) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_; });
    items_.push_back(std::move(batch));
    not_empty_.notify_one();
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
  }

  // Empty optional once closed and drained.
  std::optional<std::vector<AuditEvent>> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    std::vector<AuditEvent> out = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return out;
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<std::vector<AuditEvent>> items_;
  bool closed_ = false;
};

}  // namespace detail

// Reads line-delimited JSON events from `in` and drives `engine` in input
// order. Blank lines are skipped and not counted. One worker thread runs per
// shard when the engine has more than one.
inline RunStats run_monitor(std::istream& in, Engine& engine, const MonitorHooks& hooks = {}) {
  const auto started = std::chrono::steady_clock::now();
  RunStats stats;
  std::mutex sink_mu;
  std::uint64_t alerts = 0;

  auto deliver = [&](Detector& detector, const AuditEvent& ev) {
    const std::size_t before = detector.profiles_computed();
    const std::optional<AlertRecord> alert = detector.process(ev);
    if (!alert && !hooks.on_step) return;
    std::lock_guard lock(sink_mu);
    if (alert) {
      ++alerts;
      if (hooks.alerts != nullptr) hooks.alerts->write(*alert);
    }
    if (hooks.on_step) hooks.on_step(StepInfo{detector, ev, alert, detector.profiles_computed() != before});
  };
  auto flush = [&] {
    if (hooks.alerts == nullptr) return;
    std::lock_guard lock(sink_mu);
    hooks.alerts->flush();
  };

  const std::size_t shards = engine.shard_count();
  const std::size_t batch_size = std::max<std::size_t>(hooks.batch_size, 1);
  std::deque<detail::BatchQueue> queues;
  std::vector<std::vector<AuditEvent>> pending(shards);
  std::vector<std::thread> workers;
  if (shards > 1) {
    for (std::size_t i = 0; i < shards; ++i) queues.emplace_back(16);
    for (std::size_t i = 0; i < shards; ++i) {
      workers.emplace_back([&, i] {
        Detector& detector = engine.shard(i);
        while (auto batch = queues[i].pop()) {
          for (const AuditEvent& ev : *batch) deliver(detector, ev);
          flush();
        }
      });
    }
  }

  std::string line;
  std::uint64_t line_no = 0;
  std::size_t since_flush = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    ++stats.events_read;
    ParsedRecord parsed = parse_record(line);
    if (auto* bad = std::get_if<Malformed>(&parsed)) {
      ++stats.events_malformed;
      if (hooks.on_malformed) hooks.on_malformed(MalformedLine{line_no, std::move(bad->reason)});
      continue;
    }
    AuditEvent ev = std::get<RawEventRecord>(std::move(parsed)).to_event();
    ++stats.events_processed;
    if (shards == 1) {
      deliver(engine.shard(0), ev);
      if (++since_flush == batch_size) {
        flush();
        since_flush = 0;
      }
    } else {
      const std::size_t s = engine.shard_of(ev.user_id);
      pending[s].push_back(std::move(ev));
      if (pending[s].size() == batch_size) {
        queues[s].push(std::move(pending[s]));
        pending[s] = {};
      }
    }
  }
  if (shards > 1) {
    for (std::size_t s = 0; s < shards; ++s) {
      if (!pending[s].empty()) queues[s].push(std::move(pending[s]));
      queues[s].close();
    }
    for (std::thread& t : workers) t.join();
  }
  flush();

  stats.users_seen = engine.users_seen();
  stats.profiles_computed = engine.profiles_computed();
  stats.alerts_emitted = alerts;
  stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  stats.peak_rss_bytes = peak_rss_bytes();
  return stats;
}

}  // namespace astdmon
