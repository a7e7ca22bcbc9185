#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "ssem/em_trace.hpp"
#include "ssem/gaussian.hpp"
#include "ssem/grid.hpp"

namespace ssem::gmm {

/// Two-class Gaussian mixture. Only pi1 is stored; pi0 = 1 - pi1.
struct GmmModel {
  double pi1 = 0.5;
  std::array<GaussianParams, 2> components;

  double prior(int cls) const { return cls == 1 ? pi1 : 1.0 - pi1; }
  Eigen::Index dim() const { return components[0].dim(); }
};

struct EmConfig {
  int max_iter = 100;
  double tol = 1e-5;
};

struct GmmFit {
  GmmModel model;
  EmTrace trace;
};

/// Supervised estimate from the labeled rows of `features` (labels: -1 for
/// unlabeled, else class). Throws InitError when a class has < 2 labels.
GmmModel init_from_labels(const Eigen::Ref<const Eigen::MatrixXd>& features,
                          const std::vector<std::int8_t>& labels);
GmmModel init_from_labels(const RasterScene& scene, const LabelSet& labels, bool use_elevation);

/// P(y = 1 | x).
double posterior(const GmmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// P(y = 1 | x_n) for every row.
Eigen::VectorXd posterior_rows(const GmmModel& model, const Eigen::Ref<const Eigen::MatrixXd>& features);

/// Semi-supervised EM: unlabeled rows contribute their posteriors, labeled
/// rows their fixed class indicator. Throws DegenerateError naming the
/// iteration when a class loses all weight.
GmmFit em_fit(const Eigen::Ref<const Eigen::MatrixXd>& features,
              const std::vector<std::int8_t>& labels, const EmConfig& config = {});
GmmFit em_fit(const RasterScene& scene, const LabelSet& labels, bool use_elevation,
              const EmConfig& config = {});

/// Class 1 wherever the posterior reaches `cutoff`.
std::vector<std::uint8_t> infer(const GmmModel& model, const Eigen::Ref<const Eigen::MatrixXd>& features,
                                double cutoff = 0.5);
std::vector<std::uint8_t> infer(const GmmModel& model, const RasterScene& scene, bool use_elevation,
                                double cutoff = 0.5);

}  // namespace ssem::gmm
