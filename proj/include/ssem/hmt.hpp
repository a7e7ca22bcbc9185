#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ssem/em_trace.hpp"
#include "ssem/gaussian.hpp"
#include "ssem/grid.hpp"

namespace ssem::hmt {

/// Forest over pixels; a node's parent is its downhill neighbor.
struct FlowTree {
  /// -1 for roots.
  std::vector<std::int64_t> parent;
  std::vector<std::vector<std::size_t>> children;
  std::vector<std::size_t> roots;
  /// Every node appears before its parent.
  std::vector<std::size_t> topo_order;

  std::size_t size() const { return parent.size(); }
  bool is_root(std::size_t n) const { return parent[n] < 0; }

  /// Derives children, roots and topo_order from a parent array.
  /// Throws DataError on out-of-range parents or cycles.
  static FlowTree from_parents(std::vector<std::int64_t> parent);
  /// Throws DataError when the structural invariants do not hold.
  void validate() const;
};

/// Each pixel's parent is its strictly lower neighbor of minimum elevation
/// (ties to the smallest row-major index); pixels without one are roots.
FlowTree build_flow_tree(std::span<const double> elevation, std::uint32_t width,
                         std::uint32_t height, Neighborhood neighborhood);

/// Debug dump: "node parent" per line, -1 for roots.
void write_tree(const FlowTree& tree, std::ostream& out);

/// P(y_child | y_parent): 1, 0 under a dry parent; 1 - rho, rho under a flooded one.
double transition(double rho, int child, int parent);

struct HmtModel {
  double rho = 0.99;
  double pi1 = 0.5;
  std::array<GaussianParams, 2> components;

  double prior(int cls) const { return cls == 1 ? pi1 : 1.0 - pi1; }
};

/// 2x2 joint posterior indexed [y_child][y_parent].
using PairTable = std::array<std::array<double, 2>, 2>;

struct TreePosteriors {
  /// P(y_n = 1 | X) per node.
  std::vector<double> marginal;
  /// P(y_n, y_parent | X) per node; all zero for roots.
  std::vector<PairTable> pairwise;
  /// log P(X) under the model that produced the posteriors.
  double log_likelihood = 0.0;
};

/// Per-node log emission densities, log(n, c) = log P(x_n | y_n = c).
struct EmissionTable {
  Eigen::MatrixX2d log;

  Eigen::Index rows() const { return log.rows(); }
};

EmissionTable log_emissions(const HmtModel& model, const Eigen::Ref<const Eigen::MatrixXd>& features);

/// Sum-product over the forest from precomputed log emissions.
TreePosteriors e_step(const HmtModel& model, const FlowTree& tree,
                      const EmissionTable& log_emission);
TreePosteriors e_step(const HmtModel& model, const FlowTree& tree,
                      const Eigen::Ref<const Eigen::MatrixXd>& features);

/// Expected-count estimate sum E[y_p y_n] / sum E[y_p] over non-root nodes;
/// nullopt when no posterior mass sits on flooded parents.
std::optional<double> estimate_rho(const TreePosteriors& posteriors, const FlowTree& tree);

struct MStepResult {
  HmtModel model;
  /// Set when estimate_rho had no mass and the previous rho was kept.
  bool rho_kept = false;
};

/// Parameter update from posteriors. `previous` supplies rho when the
/// estimate is undefined (0.99 if absent).
MStepResult m_step(const TreePosteriors& posteriors, const FlowTree& tree,
                   const Eigen::Ref<const Eigen::MatrixXd>& features,
                   const std::optional<HmtModel>& previous = std::nullopt);

struct EmConfig {
  int max_iter = 100;
  double tol = 1e-5;
  double rho_init = 0.99;
  double pi_init = 0.5;
  Neighborhood neighborhood = Neighborhood::Eight;
  /// Treat labeled pixels as observed classes during message passing.
  bool clamp_labels = false;
};

struct HmtFit {
  HmtModel model;
  EmTrace trace;
  FlowTree tree;
  /// Iterations whose rho estimate was undefined.
  std::vector<int> rho_kept_iterations;
};

/// Transductive EM over all pixels. Means and covariances start from the
/// labeled pixels (elevation excluded), rho and pi1 from the config.
HmtFit em_fit(const RasterScene& scene, const LabelSet& labels, const EmConfig& config = {});

/// Lower-level entry that takes features and tree directly. `clamp` is
/// per-node -1/0/1 and only used when config.clamp_labels is set.
HmtFit em_fit(const Eigen::Ref<const Eigen::MatrixXd>& features, FlowTree tree,
              const std::vector<std::int8_t>& labels, const EmConfig& config = {});

struct MapResult {
  std::vector<std::uint8_t> labels;
  double log_joint = 0.0;
};

/// Exact max-sum decoding; ties resolve to class 0.
MapResult map_decode(const HmtModel& model, const FlowTree& tree,
                     const EmissionTable& log_emission);
MapResult map_decode(const HmtModel& model, const FlowTree& tree,
                     const Eigen::Ref<const Eigen::MatrixXd>& features);

/// log P(X, Y) for a full assignment.
double log_joint(const HmtModel& model, const FlowTree& tree,
                 const EmissionTable& log_emission,
                 std::span<const std::uint8_t> labels);

/// True when no flood node has a dry ancestor.
bool is_monotone_flood(const FlowTree& tree, std::span<const std::uint8_t> labels);

}  // namespace ssem::hmt
