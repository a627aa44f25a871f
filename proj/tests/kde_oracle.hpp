#pragma once

// Brute-force Gaussian KDE used as the independent reference in tests.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "astdmon/calendar.hpp"

namespace astdmon::testing {

inline std::vector<double> naive_kde(std::span<const MinuteOfDay> sample, double h, bool circular = false) {
  const double pi = 3.14159265358979323846;
  const double norm = 1.0 / std::sqrt(2.0 * pi);
  std::vector<double> out(1440, 0.0);
  for (int g = 0; g < 1440; ++g) {
    double sum = 0.0;
    for (const MinuteOfDay x : sample) {
      double diff = static_cast<double>(g - x.value());
      if (circular) {
        const double a = std::fabs(diff);
        diff = a < 1440.0 - a ? a : 1440.0 - a;
      }
      const double u = diff / h;
      sum += norm * std::exp(-0.5 * u * u);
    }
    out[static_cast<std::size_t>(g)] = sum / (static_cast<double>(sample.size()) * h);
  }
  return out;
}

}  // namespace astdmon::testing
