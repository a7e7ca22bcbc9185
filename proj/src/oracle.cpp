#include "ssem/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ssem/error.hpp"

namespace ssem::oracle {

namespace {

double log_or_neg_inf(double p) {
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

// Table entries re-derived here rather than calling hmt::transition.
double transition_prob(double rho, int child, int parent) {
  if (parent == 0) return child == 0 ? 1.0 : 0.0;
  return child == 1 ? rho : 1.0 - rho;
}

}  // namespace

JointEnumeration enumerate_joint(const hmt::HmtModel& model, const hmt::FlowTree& tree,
                                 const Eigen::Ref<const Eigen::MatrixXd>& features) {
  const Eigen::Index n = features.rows();
  hmt::EmissionTable em{Eigen::MatrixX2d(n, 2)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) em.log(i, c) = log_pdf(model.components[c], features.row(i).transpose());
  return enumerate_joint(model, tree, em);
}

JointEnumeration enumerate_joint(const hmt::HmtModel& model, const hmt::FlowTree& tree,
                                 const hmt::EmissionTable& log_emission) {
  const std::size_t n = tree.parent.size();
  if (n > kEnumerationCap)
    throw CapError("enumeration capped at " + std::to_string(kEnumerationCap) + " nodes, got " +
                   std::to_string(n));
  if (static_cast<std::size_t>(log_emission.rows()) != n) throw DimError("emission rows != nodes");

  const std::size_t states = std::size_t{1} << n;
  std::vector<double> logp(states);
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_state = 0;
  for (std::size_t s = 0; s < states; ++s) {
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int y = static_cast<int>((s >> i) & 1U);
      v += log_emission.log(static_cast<Eigen::Index>(i), y);
      const auto p = tree.parent[i];
      if (p < 0) {
        v += log_or_neg_inf(y == 1 ? model.pi1 : 1.0 - model.pi1);
      } else {
        const int yp = static_cast<int>((s >> static_cast<std::size_t>(p)) & 1U);
        v += log_or_neg_inf(transition_prob(model.rho, y, yp));
      }
    }
    logp[s] = v;
    if (v > best) {
      best = v;
      best_state = s;
    }
  }

  JointEnumeration out;
  double z = 0.0;
  for (double v : logp) z += std::exp(v - best);
  out.log_evidence = best + std::log(z);
  out.marginal.assign(n, 0.0);
  out.pairwise.assign(n, hmt::PairTable{});
  for (std::size_t s = 0; s < states; ++s) {
    if (logp[s] >= best - 1e-12) ++out.map_ties;
    const double w = std::exp(logp[s] - best) / z;
    if (w == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const int y = static_cast<int>((s >> i) & 1U);
      if (y == 1) out.marginal[i] += w;
      const auto p = tree.parent[i];
      if (p >= 0) {
        const int yp = static_cast<int>((s >> static_cast<std::size_t>(p)) & 1U);
        out.pairwise[i][y][yp] += w;
      }
    }
  }
  out.map_log_value = best;
  out.map_assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.map_assignment[i] = static_cast<std::uint8_t>((best_state >> i) & 1U);
  return out;
}

double gmm_loglik(const gmm::GmmModel& model, const Eigen::Ref<const Eigen::MatrixXd>& features,
                  const std::vector<std::int8_t>& labels) {
  const double pi[2] = {1.0 - model.pi1, model.pi1};
  double total = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Eigen::VectorXd x = features.row(i).transpose();
    double term[2];
    for (int c = 0; c < 2; ++c) term[c] = log_or_neg_inf(pi[c]) + log_pdf(model.components[c], x);
    const int lab = labels[static_cast<std::size_t>(i)];
    if (lab >= 0) {
      total += term[lab];
    } else {
      const double hi = term[0] > term[1] ? term[0] : term[1];
      total += hi + std::log(std::exp(term[0] - hi) + std::exp(term[1] - hi));
    }
  }
  return total;
}

double gmm_loglik(const gmm::GmmModel& model, const RasterScene& scene, const LabelSet& labels,
                  bool use_elevation) {
  return gmm_loglik(model, feature_matrix(scene, use_elevation), labels.dense(scene.width, scene.height));
}

double hmt_expected_loglik(const hmt::HmtModel& model, const hmt::TreePosteriors& posteriors,
                           const hmt::FlowTree& tree, const Eigen::Ref<const Eigen::MatrixXd>& features) {
  double total = 0.0;
  auto add = [&total](double mass, double log_value) {
    if (mass > 0.0) total += mass * log_value;
  };
  for (std::size_t i = 0; i < tree.parent.size(); ++i) {
    const Eigen::VectorXd x = features.row(static_cast<Eigen::Index>(i)).transpose();
    const double q1 = posteriors.marginal[i];
    const double q[2] = {1.0 - q1, q1};
    for (int c = 0; c < 2; ++c) add(q[c], log_pdf(model.components[c], x));
    if (tree.parent[i] < 0) {
      add(q[0], log_or_neg_inf(1.0 - model.pi1));
      add(q[1], log_or_neg_inf(model.pi1));
    } else {
      for (int y = 0; y < 2; ++y)
        for (int yp = 0; yp < 2; ++yp)
          add(posteriors.pairwise[i][y][yp], log_or_neg_inf(transition_prob(model.rho, y, yp)));
    }
  }
  return total;
}

hmt::FlowTree random_tree(std::size_t nodes, std::mt19937_64& rng) {
  std::vector<std::int64_t> parent(nodes, -1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 1; i < nodes; ++i) {
    if (unit(rng) < 0.2) continue;
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    parent[i] = static_cast<std::int64_t>(pick(rng));
  }
  std::vector<std::size_t> perm(nodes);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::int64_t> relabeled(nodes, -1);
  for (std::size_t i = 0; i < nodes; ++i)
    relabeled[perm[i]] = parent[i] < 0 ? -1 : static_cast<std::int64_t>(perm[static_cast<std::size_t>(parent[i])]);
  return hmt::FlowTree::from_parents(std::move(relabeled));
}

hmt::HmtModel random_model(Eigen::Index dim, double rho_lo, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  hmt::HmtModel model;
  model.rho = rho_lo + (1.0 - rho_lo) * unit(rng);
  model.pi1 = 0.1 + 0.8 * unit(rng);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd mean(dim);
    Eigen::MatrixXd a(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      mean[i] = 1.5 * gauss(rng) + (c == 1 ? 1.0 : -1.0);
      for (Eigen::Index j = 0; j < dim; ++j) a(i, j) = 0.5 * gauss(rng);
    }
    Eigen::MatrixXd cov = a * a.transpose() + 0.3 * Eigen::MatrixXd::Identity(dim, dim);
    model.components[c] = make_gaussian(std::move(mean), std::move(cov));
  }
  return model;
}

Eigen::MatrixXd sample_features(const hmt::HmtModel& model, const hmt::FlowTree& tree,
                                std::mt19937_64& rng) {
  const std::size_t n = tree.parent.size();
  const Eigen::Index dim = model.components[0].dim();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<int> y(n, 0);
  for (auto it = tree.topo_order.rbegin(); it != tree.topo_order.rend(); ++it) {
    const auto i = *it;
    const double p1 = tree.parent[i] < 0 ? model.pi1
                                         : transition_prob(model.rho, 1, y[static_cast<std::size_t>(tree.parent[i])]);
    y[i] = unit(rng) < p1 ? 1 : 0;
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = model.components[y[i]];
    const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(g.cov).matrixL();
    Eigen::VectorXd z(dim);
    for (Eigen::Index k = 0; k < dim; ++k) z[k] = gauss(rng);
    x.row(static_cast<Eigen::Index>(i)) = (g.mean + l * z).transpose();
  }
  return x;
}

}  // namespace ssem::oracle
