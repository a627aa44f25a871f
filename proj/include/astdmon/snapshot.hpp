#pragma once

// Engine state as a single JSON document.
//
//   {"schema": "astdmon/state@1",
//    "config": {...},
//    "profiles_computed": 7,
//    "users": [{"user_id": "...", "n": 3, "k": 10, "threshold": 0.001,
//               "events_by_week": [{"period": 202225, "minutes": [540, ...]}],
//               "used_periods": [...], "accumulated_periods": [...],
//               "start_kde": false,
//               "user_kde": null | {"bandwidth": h, "sample_count": m, "densities": [1440 values]},
//               "alerts": ["id", ...]}]}
//
// Doubles are written in shortest round-trip form, so a restored engine
// continues bit for bit.

#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

#include "astdmon/config.hpp"
#include "astdmon/engine.hpp"

namespace astdmon {

inline constexpr const char* kSnapshotSchema = "astdmon/state@1";

// `location` is a JSON pointer into the document, or "byte N" for syntax errors.
class SnapshotError : public std::runtime_error {
 public:
  SnapshotError(std::string location, const std::string& message)
      : std::runtime_error(location + ": " + message), location_(std::move(location)) {}
  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson config_to_json(const DetectorConfig& c) {
  ojson j;
  j["n"] = c.n;
  j["k"] = c.k;
  j["threshold"] = c.threshold;
  j["max_gap_weeks"] = c.max_gap_weeks;
  j["bandwidth"] = {{"method", c.bandwidth.method == BandwidthPolicy::Method::fixed ? "fixed" : "silverman"},
                    {"value", c.bandwidth.value}};
  j["kernel"] = "gaussian";
  j["circular"] = c.boundary == BoundaryMode::circular;
  return j;
}

inline ojson periods_to_json(const PeriodList& periods) {
  ojson out = ojson::array();
  for (const Period p : periods) out.push_back(p.encoded());
  return out;
}

inline ojson entity_to_json(const std::string& user_id, const EntityState& s) {
  ojson j;
  j["user_id"] = user_id;
  j["n"] = s.n;
  j["k"] = s.k;
  j["threshold"] = s.threshold;
  ojson weeks = ojson::array();
  for (const auto& [period, minutes] : s.events_by_week) {
    ojson values = ojson::array();
    for (const MinuteOfDay m : minutes) values.push_back(m.value());
    weeks.push_back({{"period", period.encoded()}, {"minutes", std::move(values)}});
  }
  j["events_by_week"] = std::move(weeks);
  j["used_periods"] = periods_to_json(s.used_periods);
  j["accumulated_periods"] = periods_to_json(s.accumulated_periods);
  j["start_kde"] = s.start_kde;
  if (s.user_kde) {
    j["user_kde"] = {{"bandwidth", s.user_kde->bandwidth()},
                     {"sample_count", s.user_kde->sample_count()},
                     {"densities", s.user_kde->densities()}};
  } else {
    j["user_kde"] = nullptr;
  }
  j["alerts"] = s.alerts;
  return j;
}

// Cursor over a parsed document that knows its JSON pointer.
class Node {
 public:
  Node(const nlohmann::json& value, std::string path) : value_(value), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }
  const nlohmann::json& raw() const noexcept { return value_; }

  [[noreturn]] void fail(const std::string& message) const {
    throw SnapshotError(path_.empty() ? "/" : path_, message);
  }

  Node at(const std::string& key) const {
    if (!value_.is_object()) fail("expected an object");
    const auto it = value_.find(key);
    if (it == value_.end()) throw SnapshotError(path_ + "/" + key, "missing field");
    return Node(*it, path_ + "/" + key);
  }

  Node at(std::size_t i) const { return Node(value_.at(i), path_ + "/" + std::to_string(i)); }

  std::size_t array_size() const {
    if (!value_.is_array()) fail("expected an array");
    return value_.size();
  }

  std::int64_t integer() const {
    if (!value_.is_number_integer()) fail("expected an integer");
    return value_.get<std::int64_t>();
  }

  int small_int() const {
    const std::int64_t v = integer();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) fail("integer out of range");
    return static_cast<int>(v);
  }

  double number() const {
    if (!value_.is_number()) fail("expected a number");
    return value_.get<double>();
  }

  bool boolean() const {
    if (!value_.is_boolean()) fail("expected a boolean");
    return value_.get<bool>();
  }

  const std::string& string() const {
    if (!value_.is_string()) fail("expected a string");
    return value_.get_ref<const std::string&>();
  }

  Period period() const {
    const std::int64_t v = integer();
    if (v < 0 || v > std::numeric_limits<int>::max()) fail("not a period");
    try {
      return Period::from_encoded(static_cast<int>(v));
    } catch (const CalendarError& e) {
      fail(e.what());
    }
  }

  PeriodList periods() const {
    PeriodList out;
    const std::size_t size = array_size();
    out.reserve(size);
    for (std::size_t i = 0; i < size; ++i) out.push_back(at(i).period());
    return out;
  }

 private:
  const nlohmann::json& value_;
  std::string path_;
};

inline DetectorConfig config_from_json(const Node& node) {
  DetectorConfig c;
  c.n = node.at("n").small_int();
  c.k = node.at("k").small_int();
  c.threshold = node.at("threshold").number();
  c.max_gap_weeks = node.at("max_gap_weeks").small_int();
  const Node bw = node.at("bandwidth");
  const std::string& method = bw.at("method").string();
  if (method == "silverman") {
    c.bandwidth.method = BandwidthPolicy::Method::silverman;
  } else if (method == "fixed") {
    c.bandwidth.method = BandwidthPolicy::Method::fixed;
  } else {
    bw.at("method").fail("unknown bandwidth method '" + method + "'");
  }
  c.bandwidth.value = bw.at("value").number();
  if (node.at("kernel").string() != "gaussian") node.at("kernel").fail("unsupported kernel");
  c.boundary = node.at("circular").boolean() ? BoundaryMode::circular : BoundaryMode::linear;
  try {
    c.validate();
  } catch (const ConfigError& e) {
    node.fail(e.what());
  }
  return c;
}

inline EntityState entity_from_json(const Node& node) {
  EntityState s;
  s.n = node.at("n").small_int();
  s.k = node.at("k").small_int();
  s.threshold = node.at("threshold").number();
  if (s.n < 1 || s.k < 1 || !(s.threshold > 0.0)) node.fail("invalid n, k or threshold");

  const Node weeks = node.at("events_by_week");
  const std::size_t week_count = weeks.array_size();
  for (std::size_t i = 0; i < week_count; ++i) {
    const Node entry = weeks.at(i);
    const Period p = entry.at("period").period();
    const Node minutes = entry.at("minutes");
    MinuteList values;
    const std::size_t m = minutes.array_size();
    values.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
      const std::int64_t v = minutes.at(j).integer();
      if (v < 0 || v >= kMinutesPerDay) minutes.at(j).fail("minute out of range");
      values.emplace_back(static_cast<int>(v));
    }
    if (!s.events_by_week.emplace(p, std::move(values)).second) entry.at("period").fail("duplicate period");
  }

  s.used_periods = node.at("used_periods").periods();
  s.accumulated_periods = node.at("accumulated_periods").periods();
  s.start_kde = node.at("start_kde").boolean();

  const Node kde = node.at("user_kde");
  if (!kde.raw().is_null()) {
    const Node densities = kde.at("densities");
    const std::size_t size = densities.array_size();
    std::vector<double> values;
    values.reserve(size);
    for (std::size_t i = 0; i < size; ++i) values.push_back(densities.at(i).number());
    const std::int64_t count = kde.at("sample_count").integer();
    if (count < 1) kde.at("sample_count").fail("must be >= 1");
    try {
      s.user_kde = KdeProfile::from_parts(std::move(values), kde.at("bandwidth").number(),
                                          static_cast<std::size_t>(count));
    } catch (const KdeError& e) {
      kde.fail(e.what());
    }
  }

  const Node alerts = node.at("alerts");
  const std::size_t alert_count = alerts.array_size();
  for (std::size_t i = 0; i < alert_count; ++i) s.alerts.push_back(alerts.at(i).string());

  if (const auto problems = check_invariants(s); !problems.empty()) node.fail(problems.front());
  return s;
}

}  // namespace detail

inline std::string dump_state(const Engine& engine) {
  detail::ojson doc;
  doc["schema"] = kSnapshotSchema;
  doc["config"] = detail::config_to_json(engine.config());
  doc["profiles_computed"] = engine.profiles_computed();
  detail::ojson users = detail::ojson::array();
  for (const std::string& user : engine.users()) {
    users.push_back(detail::entity_to_json(user, *engine.entity_state(user)));
  }
  doc["users"] = std::move(users);
  return doc.dump();
}

// Rebuilds an engine. `config` replaces the stored configuration when given;
// per-user n, k and threshold always come from the snapshot.
inline Engine restore_state(const std::string& text, std::optional<DetectorConfig> config = std::nullopt,
                            std::size_t shards = 1) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SnapshotError("byte " + std::to_string(e.byte), "malformed JSON");
  }
  const detail::Node root(doc, "");
  if (!doc.is_object()) root.fail("expected an object");
  if (root.at("schema").string() != kSnapshotSchema) {
    root.at("schema").fail("unsupported schema '" + root.at("schema").string() + "'");
  }
  const DetectorConfig stored = detail::config_from_json(root.at("config"));
  Engine engine(config.value_or(stored), shards);

  const std::int64_t profiles = root.at("profiles_computed").integer();
  if (profiles < 0) root.at("profiles_computed").fail("must be >= 0");

  const detail::Node users = root.at("users");
  const std::size_t count = users.array_size();
  std::set<std::string> seen;
  for (std::size_t i = 0; i < count; ++i) {
    const detail::Node entry = users.at(i);
    const std::string& user = entry.at("user_id").string();
    if (user.empty()) entry.at("user_id").fail("empty user id");
    if (!seen.insert(user).second) entry.at("user_id").fail("duplicate user '" + user + "'");
    engine.restore_entity(user, detail::entity_from_json(entry));
  }
  engine.set_profiles_computed(static_cast<std::size_t>(profiles));
  return engine;
}

// Configuration stored in a snapshot, without restoring any state.
inline DetectorConfig snapshot_config(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SnapshotError("byte " + std::to_string(e.byte), "malformed JSON");
  }
  const detail::Node root(doc, "");
  if (!doc.is_object()) root.fail("expected an object");
  return detail::config_from_json(root.at("config"));
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out.flush()) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace astdmon
