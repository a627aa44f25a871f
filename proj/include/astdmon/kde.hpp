#pragma once

// Gaussian kernel density estimate of a user's activity over the 1440
// minutes of the day. Densities are evaluated once on the integer-minute
// grid and looked up by index afterwards.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "astdmon/calendar.hpp"

namespace astdmon {

class KdeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TrainingSample = std::vector<MinuteOfDay>;

enum class BoundaryMode { linear, circular };

inline constexpr double kMinBandwidth = 1.0;

/// Concatenate the minutes of `used_periods` in list order; periods missing
/// from the map contribute nothing.
inline TrainingSample fuse_samples(const EventsByWeek& events_by_week,
                                   std::span<const Period> used_periods) {
  TrainingSample out;
  out.reserve(count_events(events_by_week, used_periods));
  for (const Period p : used_periods) {
    if (const auto it = events_by_week.find(p); it != events_by_week.end()) {
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
  }
  return out;
}

namespace detail {

// Linear-interpolated quantile over sorted data (Hyndman-Fan type 7).
inline double sorted_quantile(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Silverman's rule of thumb, h = 0.9 min(sd, IQR/1.34) m^(-1/5), floored
/// at `min_bandwidth`. The standard deviation uses the m-1 denominator.
inline double select_bandwidth(std::span<const MinuteOfDay> sample,
                               double min_bandwidth = kMinBandwidth) {
  if (sample.empty()) throw KdeError("bandwidth selection needs a non-empty sample");
  const std::size_t m = sample.size();
  if (m == 1) return min_bandwidth;

  std::vector<double> values;
  values.reserve(m);
  for (const MinuteOfDay v : sample) values.push_back(v.value());
  std::sort(values.begin(), values.end());

  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(m - 1));
  const double iqr = detail::sorted_quantile(values, 0.75) - detail::sorted_quantile(values, 0.25);

  const double spread = std::min(sd, iqr / 1.34);
  const double h = 0.9 * spread * std::pow(static_cast<double>(m), -0.2);
  return std::max(h, min_bandwidth);
}

class KdeProfile {
 public:
  static constexpr std::size_t kGridSize = kMinutesPerDay;

  // Rebuilds a profile from stored parts (snapshots); validates invariants.
  static KdeProfile from_parts(std::vector<double> densities, double bandwidth,
                               std::size_t sample_count) {
    if (densities.size() != kGridSize) {
      throw KdeError("profile must hold 1440 densities, got " + std::to_string(densities.size()));
    }
    for (double d : densities) {
      if (!(d >= 0.0) || !std::isfinite(d)) throw KdeError("profile density must be finite and >= 0");
    }
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw KdeError("profile bandwidth must be > 0");
    if (sample_count == 0) throw KdeError("profile sample_count must be >= 1");
    return KdeProfile{std::move(densities), bandwidth, sample_count};
  }

  std::span<const double> densities() const noexcept { return densities_; }
  double bandwidth() const noexcept { return bandwidth_; }
  std::size_t sample_count() const noexcept { return sample_count_; }

  double operator[](MinuteOfDay minute) const noexcept {
    return densities_[static_cast<std::size_t>(minute.value())];
  }

  friend bool operator==(const KdeProfile&, const KdeProfile&) = default;

 private:
  KdeProfile(std::vector<double> densities, double bandwidth, std::size_t sample_count)
      : densities_(std::move(densities)), bandwidth_(bandwidth), sample_count_(sample_count) {}

  std::vector<double> densities_;
  double bandwidth_ = kMinBandwidth;
  std::size_t sample_count_ = 0;
};

// Samples live on the integer grid, so the kernel only ever sees integer
// offsets: bin the sample, tabulate phi(d/h) once and convolve.
inline KdeProfile fit_profile(std::span<const MinuteOfDay> sample, double bandwidth,
                              BoundaryMode mode = BoundaryMode::linear) {
  if (sample.empty()) throw KdeError("cannot fit a profile from an empty sample");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw KdeError("bandwidth must be > 0");
  constexpr int kGrid = kMinutesPerDay;

  std::array<std::size_t, kGrid> counts{};
  for (const MinuteOfDay v : sample) ++counts[static_cast<std::size_t>(v.value())];
  std::vector<int> occupied;
  for (int x = 0; x < kGrid; ++x) {
    if (counts[static_cast<std::size_t>(x)] != 0) occupied.push_back(x);
  }

  std::array<double, kGrid> kernel{};
  for (int d = 0; d < kGrid; ++d) {
    const double u = static_cast<double>(d) / bandwidth;
    kernel[static_cast<std::size_t>(d)] = std::exp(-0.5 * u * u) * std::numbers::inv_sqrtpi *
                                          (1.0 / std::numbers::sqrt2);
  }

  const double scale = 1.0 / (static_cast<double>(sample.size()) * bandwidth);
  std::vector<double> densities(kGrid, 0.0);
  for (int g = 0; g < kGrid; ++g) {
    double acc = 0.0;
    for (const int x : occupied) {
      int d = std::abs(g - x);
      if (mode == BoundaryMode::circular) d = std::min(d, kGrid - d);
      acc += static_cast<double>(counts[static_cast<std::size_t>(x)]) *
             kernel[static_cast<std::size_t>(d)];
    }
    densities[static_cast<std::size_t>(g)] = acc * scale;
  }
  return KdeProfile::from_parts(std::move(densities), bandwidth, sample.size());
}

inline double density_at(const KdeProfile& profile, MinuteOfDay minute) noexcept {
  return profile[minute];
}

enum class Verdict { normal, anomalous };

/// Anomalous when the density at `minute` is at or below `threshold`.
inline Verdict classify_minute(const KdeProfile& profile, MinuteOfDay minute, double threshold) noexcept {
  return density_at(profile, minute) <= threshold ? Verdict::anomalous : Verdict::normal;
}

}  // namespace astdmon
