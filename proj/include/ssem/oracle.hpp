#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "ssem/gmm.hpp"
#include "ssem/hmt.hpp"

namespace ssem::oracle {

inline constexpr std::size_t kEnumerationCap = 20;

struct JointEnumeration {
  std::vector<double> marginal;
  std::vector<hmt::PairTable> pairwise;  // zero for roots
  std::vector<std::uint8_t> map_assignment;
  double map_log_value = 0.0;
  double log_evidence = 0.0;
  /// Number of assignments attaining the maximum (within 1e-12).
  std::size_t map_ties = 0;
};

/// Exhaustive evaluation of the tree joint over all 2^N assignments.
/// Throws CapError when N exceeds kEnumerationCap.
JointEnumeration enumerate_joint(const hmt::HmtModel& model, const hmt::FlowTree& tree,
                                 const Eigen::Ref<const Eigen::MatrixXd>& features);
JointEnumeration enumerate_joint(const hmt::HmtModel& model, const hmt::FlowTree& tree,
                                 const hmt::EmissionTable& log_emission);

/// Observed-data log-likelihood of the semi-supervised mixture: unlabeled
/// pixels contribute ln sum_c pi_c N(x; c), labeled ones ln pi_y N(x; y).
double gmm_loglik(const gmm::GmmModel& model, const RasterScene& scene, const LabelSet& labels,
                  bool use_elevation);
double gmm_loglik(const gmm::GmmModel& model, const Eigen::Ref<const Eigen::MatrixXd>& features,
                  const std::vector<std::int8_t>& labels);

/// Expected complete-data log-likelihood of `model` under fixed posteriors:
/// sum_n sum_y P(y_n|X) ln P(x_n|y_n) + roots sum_y P(y_n|X) ln pi_y
/// + non-roots sum P(y_n, y_p|X) ln P(y_n|y_p). Zero-mass terms are skipped.
double hmt_expected_loglik(const hmt::HmtModel& model, const hmt::TreePosteriors& posteriors,
                           const hmt::FlowTree& tree, const Eigen::Ref<const Eigen::MatrixXd>& features);

/// Random forest of `nodes` nodes with parents drawn among earlier nodes
/// (about one node in five becomes an extra root), then relabeled by a
/// random permutation.
hmt::FlowTree random_tree(std::size_t nodes, std::mt19937_64& rng);

/// Random model with rho in [rho_lo, 1], pi1 in [0.1, 0.9] and random
/// well-conditioned Gaussians of dimension `dim`.
hmt::HmtModel random_model(Eigen::Index dim, double rho_lo, std::mt19937_64& rng);

/// Features sampled from the model's generative process over `tree`.
Eigen::MatrixXd sample_features(const hmt::HmtModel& model, const hmt::FlowTree& tree,
                                std::mt19937_64& rng);

}  // namespace ssem::oracle
