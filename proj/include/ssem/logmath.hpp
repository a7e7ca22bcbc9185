#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace ssem {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(exp(a) + exp(b)) without overflow; -inf when both are -inf.
inline double log_add(double a, double b) {
  const double hi = std::max(a, b);
  if (hi == kNegInf) return kNegInf;
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

/// log(p) with log(0) = -inf.
inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

}  // namespace ssem
