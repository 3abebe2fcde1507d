// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SOFI_UTIL_HPP
#define SOFI_UTIL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "sofi/types.hpp"

namespace sofi {

/// Signal-to-noise ratio in dB of `test` against `ref`. Returns +300 dB
/// when the error energy underflows to zero.
inline double snr_db(const ArrayXd& ref, const ArrayXd& test) {
  if (ref.size() != test.size()) throw std::invalid_argument("snr_db: length mismatch");
  const double sig = ref.square().sum();
  const double err = (ref - test).square().sum();
  if (err <= 0.0) return 300.0;
  if (sig <= 0.0) return -300.0;
  return 10.0 * std::log10(sig / err);
}

/// Quantile with linear interpolation between order statistics. q in [0, 1].
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const auto hi = static_cast<size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

/// Kernel-3 median filter with edge replication.
inline VectorXd median_filter3(const VectorXd& x) {
  const Index n = x.size();
  VectorXd out(n);
  for (Index i = 0; i < n; ++i) {
    const double a = x(std::max<Index>(i - 1, 0));
    const double b = x(i);
    const double c = x(std::min<Index>(i + 1, n - 1));
    out(i) = std::max(std::min(a, b), std::min(std::max(a, b), c));
  }
  return out;
}

/// FNV-1a 64-bit hash, used for stable config fingerprints in reports.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Deterministic uniform double in [lo, hi). Distribution code is hand-rolled
/// because std::uniform_real_distribution output is implementation-defined
/// and corpus generation must be byte-identical across platforms.
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

/// Deterministic standard normal (Box-Muller on the uniform above).
inline double gaussian(std::mt19937_64& rng) {
  double u1 = uniform(rng, 0.0, 1.0);
  while (u1 <= 0.0) u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(n))) % n;
}

}  // namespace sofi

#endif  // SOFI_UTIL_HPP
