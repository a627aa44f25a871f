#pragma once

// Flat key/value detector configuration:
//
//   # comment
//   n = 3
//   k = 10
//   threshold = 0.001
//   max_gap_weeks = 3
//   bandwidth.method = silverman     # or fixed
//   bandwidth.value = 15
//   kernel = gaussian
//   circular = false

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <string>
#include <string_view>
#include <system_error>

#include "astdmon/detector.hpp"

namespace astdmon {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("invalid value for " + std::string(key) + ": '" + std::string(text) + "'");
  }
  return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("invalid value for " + std::string(key) + ": '" + std::string(text) + "'");
}

}  // namespace detail

// Applies one setting; unknown keys are errors.
inline void apply_setting(DetectorConfig& c, std::string_view key, std::string_view value) {
  using detail::parse_number;
  if (key == "n") {
    c.n = parse_number<int>(key, value);
  } else if (key == "k") {
    c.k = parse_number<int>(key, value);
  } else if (key == "threshold") {
    c.threshold = parse_number<double>(key, value);
  } else if (key == "max_gap_weeks") {
    c.max_gap_weeks = parse_number<int>(key, value);
  } else if (key == "bandwidth.method") {
    if (value == "silverman") {
      c.bandwidth.method = BandwidthPolicy::Method::silverman;
    } else if (value == "fixed") {
      c.bandwidth.method = BandwidthPolicy::Method::fixed;
    } else {
      throw ConfigError("bandwidth.method must be silverman or fixed");
    }
  } else if (key == "bandwidth.value") {
    c.bandwidth.value = parse_number<double>(key, value);
  } else if (key == "kernel") {
    if (value != "gaussian") throw ConfigError("only the gaussian kernel is supported");
  } else if (key == "circular") {
    c.boundary = detail::parse_bool(key, value) ? BoundaryMode::circular : BoundaryMode::linear;
  } else {
    throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  }
}

inline void apply_config_stream(DetectorConfig& c, std::istream& in) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    auto sep = view.find('=');
    if (sep == std::string_view::npos) sep = view.find(':');
    if (sep == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_setting(c, detail::trim(view.substr(0, sep)), detail::trim(view.substr(sep + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline DetectorConfig load_config_file(const std::string& path, DetectorConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  apply_config_stream(base, in);
  return base;
}

inline std::string to_text(const DetectorConfig& c) {
  std::string out;
  out += "n = " + std::to_string(c.n) + "\n";
  out += "k = " + std::to_string(c.k) + "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", c.threshold);
  out += std::string("threshold = ") + buf + "\n";
  out += "max_gap_weeks = " + std::to_string(c.max_gap_weeks) + "\n";
  out += std::string("bandwidth.method = ") +
         (c.bandwidth.method == BandwidthPolicy::Method::fixed ? "fixed" : "silverman") + "\n";
  std::snprintf(buf, sizeof buf, "%.17g", c.bandwidth.value);
  out += std::string("bandwidth.value = ") + buf + "\n";
  out += "kernel = gaussian\n";
  out += std::string("circular = ") + (c.boundary == BoundaryMode::circular ? "true" : "false") + "\n";
  return out;
}

// The default threshold sits above the uniform density 1/1440, so a user
// whose activity is spread evenly over the day is flagged on every event.
inline bool threshold_exceeds_uniform(const DetectorConfig& c) { return c.threshold >= 1.0 / kMinutesPerDay; }

}  // namespace astdmon
