#pragma once

#include <array>
#include <cmath>
#include <iosfwd>
#include <limits>
#include <vector>

#include "ssem/gaussian.hpp"

namespace ssem {

/// Parameters and fit statistics after one EM iteration (iteration 0 is the
/// initialization).
struct EmSnapshot {
  int iteration = 0;
  double rho = std::numeric_limits<double>::quiet_NaN();  // HMT only
  double pi1 = 0.0;
  std::array<GaussianParams, 2> components;
  /// Observed-data log-likelihood at these parameters.
  double log_likelihood = 0.0;
  /// Max relative change against the previous snapshot; NaN for iteration 0.
  double max_rel_change = std::numeric_limits<double>::quiet_NaN();
};

struct EmTrace {
  std::vector<EmSnapshot> snapshots;
  bool converged = false;
};

/// Flattens pi1 (and rho when finite), both means and both covariances.
std::vector<double> flatten_parameters(double rho, double pi1,
                                       const std::array<GaussianParams, 2>& components);

/// max_i |new_i - old_i| / (|old_i| + 1e-12).
double max_relative_change(const std::vector<double>& before, const std::vector<double>& after);

/// CSV: iter,[rho,]pi1,mu0.k..,mu1.k..,sig0.k..,sig1.k..,loglik,maxrel.
/// Covariances contribute their diagonal only.
void write_trace_csv(const EmTrace& trace, bool with_rho, std::ostream& out);

}  // namespace ssem
