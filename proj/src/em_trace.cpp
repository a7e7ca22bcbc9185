#include "ssem/em_trace.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>

namespace ssem {

std::vector<double> flatten_parameters(double rho, double pi1,
                                       const std::array<GaussianParams, 2>& components) {
  std::vector<double> out;
  if (std::isfinite(rho)) out.push_back(rho);
  out.push_back(pi1);
  for (const auto& g : components) out.insert(out.end(), g.mean.begin(), g.mean.end());
  for (const auto& g : components)
    for (Eigen::Index i = 0; i < g.cov.rows(); ++i)
      for (Eigen::Index j = i; j < g.cov.cols(); ++j) out.push_back(g.cov(i, j));
  return out;
}

double max_relative_change(const std::vector<double>& before, const std::vector<double>& after) {
  double worst = 0.0;
  const std::size_t n = std::min(before.size(), after.size());
  for (std::size_t i = 0; i < n; ++i)
    worst = std::max(worst, std::abs(after[i] - before[i]) / (std::abs(before[i]) + 1e-12));
  return worst;
}

void write_trace_csv(const EmTrace& trace, bool with_rho, std::ostream& out) {
  if (trace.snapshots.empty()) return;
  const auto m = trace.snapshots.front().components[0].dim();
  out << "iter";
  if (with_rho) out << ",rho";
  out << ",pi1";
  for (int c = 0; c < 2; ++c)
    for (Eigen::Index k = 0; k < m; ++k) out << ",mu" << c << '.' << k;
  for (int c = 0; c < 2; ++c)
    for (Eigen::Index k = 0; k < m; ++k) out << ",sig" << c << '.' << k;
  out << ",loglik,maxrel\n";
  out << std::setprecision(17);
  for (const auto& s : trace.snapshots) {
    out << s.iteration;
    if (with_rho) out << ',' << s.rho;
    out << ',' << s.pi1;
    for (const auto& g : s.components)
      for (Eigen::Index k = 0; k < m; ++k) out << ',' << g.mean[k];
    for (const auto& g : s.components)
      for (Eigen::Index k = 0; k < m; ++k) out << ',' << g.cov(k, k);
    out << ',' << s.log_likelihood << ',' << s.max_rel_change << '\n';
  }
}

}  // namespace ssem
