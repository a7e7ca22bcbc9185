#include "ssem/hmt.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "ssem/error.hpp"
#include "ssem/logmath.hpp"
#include "ssem/parallel.hpp"

namespace ssem::hmt {

namespace {

/// log P(y_child | y_parent) laid out [child][parent].
std::array<std::array<double, 2>, 2> log_transition(double rho) {
  return {{{0.0, safe_log(1.0 - rho)}, {kNegInf, safe_log(rho)}}};
}

void check_model(const HmtModel& model) {
  if (!(model.rho > 0.0 && model.rho <= 1.0)) throw DataError("rho must lie in (0,1]");
  if (!(model.pi1 >= 0.0 && model.pi1 <= 1.0)) throw DataError("pi1 must lie in [0,1]");
}

void check_aligned(const FlowTree& tree, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(tree.size()) != rows)
    throw DimError("tree has " + std::to_string(tree.size()) + " nodes but " +
                   std::to_string(rows) + " feature rows were given");
}

// a - b in log space where a may be -inf.
double log_sub_message(double a, double b) { return a == kNegInf ? kNegInf : a - b; }

}  // namespace

FlowTree FlowTree::from_parents(std::vector<std::int64_t> parent) {
  FlowTree tree;
  const std::size_t n = parent.size();
  tree.children.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = parent[i];
    if (p < -1 || p >= static_cast<std::int64_t>(n) || p == static_cast<std::int64_t>(i))
      throw DataError("parent index out of range at node " + std::to_string(i));
    if (p < 0)
      tree.roots.push_back(i);
    else
      tree.children[static_cast<std::size_t>(p)].push_back(i);
  }
  // Breadth-first from the roots gives parents before children; reversed it
  // is the upward schedule.
  std::vector<std::size_t> order;
  order.reserve(n);
  order.insert(order.end(), tree.roots.begin(), tree.roots.end());
  for (std::size_t head = 0; head < order.size(); ++head) {
    const auto& kids = tree.children[order[head]];
    order.insert(order.end(), kids.begin(), kids.end());
  }
  if (order.size() != n) throw DataError("parent links contain a cycle");
  tree.topo_order.assign(order.rbegin(), order.rend());
  tree.parent = std::move(parent);
  return tree;
}

void FlowTree::validate() const {
  const std::size_t n = parent.size();
  if (children.size() != n || topo_order.size() != n) throw DataError("tree arrays misaligned");
  std::vector<std::size_t> position(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (topo_order[i] >= n || position[topo_order[i]] != n)
      throw DataError("topo_order is not a permutation");
    position[topo_order[i]] = i;
  }
  std::size_t root_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (parent[i] < 0) {
      ++root_count;
      continue;
    }
    const auto p = static_cast<std::size_t>(parent[i]);
    if (position[i] >= position[p]) throw DataError("node does not precede its parent");
    const auto& kids = children[p];
    if (std::find(kids.begin(), kids.end(), i) == kids.end())
      throw DataError("children is not the inverse of parent");
  }
  std::size_t child_links = 0;
  for (std::size_t i = 0; i < n; ++i) {
    child_links += children[i].size();
    for (auto c : children[i])
      if (c >= n || parent[c] != static_cast<std::int64_t>(i))
        throw DataError("children is not the inverse of parent");
  }
  if (child_links + root_count != n || roots.size() != root_count)
    throw DataError("root list inconsistent with parent links");
}

FlowTree build_flow_tree(std::span<const double> elevation, std::uint32_t width,
                         std::uint32_t height, Neighborhood neighborhood) {
  const std::size_t n = std::size_t{width} * height;
  if (elevation.size() != n) throw DimError("elevation grid size does not match width*height");
  for (double e : elevation)
    if (!std::isfinite(e)) throw DataError("elevation contains a non-finite value");

  static constexpr int kOffsets[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                         {0, 1},   {1, -1}, {1, 0},  {1, 1}};
  const bool diagonal = neighborhood == Neighborhood::Eight;
  std::vector<std::int64_t> parent(n, -1);
  for (std::uint32_t r = 0; r < height; ++r) {
    for (std::uint32_t c = 0; c < width; ++c) {
      const std::size_t self = std::size_t{r} * width + c;
      std::int64_t best = -1;
      double best_elev = elevation[self];
      // offsets are visited in increasing row-major index order, so a strict
      // comparison keeps the smallest index among equal minima
      for (const auto& off : kOffsets) {
        if (!diagonal && off[0] != 0 && off[1] != 0) continue;
        const long rr = static_cast<long>(r) + off[0];
        const long cc = static_cast<long>(c) + off[1];
        if (rr < 0 || cc < 0 || rr >= height || cc >= width) continue;
        const std::size_t idx = static_cast<std::size_t>(rr) * width + static_cast<std::size_t>(cc);
        if (elevation[idx] < best_elev) {
          best_elev = elevation[idx];
          best = static_cast<std::int64_t>(idx);
        }
      }
      parent[self] = best;
    }
  }
  return FlowTree::from_parents(std::move(parent));
}

void write_tree(const FlowTree& tree, std::ostream& out) {
  for (std::size_t i = 0; i < tree.size(); ++i) out << i << ' ' << tree.parent[i] << '\n';
}

double transition(double rho, int child, int parent) {
  if (parent == 0) return child == 0 ? 1.0 : 0.0;
  return child == 1 ? rho : 1.0 - rho;
}

EmissionTable log_emissions(const HmtModel& model, const Eigen::Ref<const Eigen::MatrixXd>& features) {
  EmissionTable out{Eigen::MatrixX2d(features.rows(), 2)};
  out.log.col(0) = log_pdf_rows(model.components[0], features);
  out.log.col(1) = log_pdf_rows(model.components[1], features);
  return out;
}

TreePosteriors e_step(const HmtModel& model, const FlowTree& tree,
                      const EmissionTable& log_emission) {
  check_model(model);
  check_aligned(tree, log_emission.rows());
  const std::size_t n = tree.size();
  const auto lt = log_transition(model.rho);
  const std::array<double, 2> log_prior{safe_log(model.prior(0)), safe_log(model.prior(1))};

  // up[n][y]: log P(x of subtree(n) | y_n); msg[n][yp]: log P(x of subtree(n) | y_parent).
  std::vector<std::array<double, 2>> up(n), msg(n);
  for (const auto node : tree.topo_order) {
    auto& u = up[node];
    const auto row = static_cast<Eigen::Index>(node);
    u = {log_emission.log(row, 0), log_emission.log(row, 1)};
    for (const auto child : tree.children[node]) {
      u[0] += msg[child][0];
      u[1] += msg[child][1];
    }
    if (!tree.is_root(node)) {
      for (int yp = 0; yp < 2; ++yp)
        msg[node][yp] = log_add(lt[0][yp] + u[0], lt[1][yp] + u[1]);
    }
  }

  TreePosteriors post;
  post.marginal.assign(n, 0.0);
  post.pairwise.assign(n, PairTable{});
  std::vector<std::array<double, 2>> belief(n);  // log P(y_n | X)
  double total = 0.0;
  for (auto it = tree.topo_order.rbegin(); it != tree.topo_order.rend(); ++it) {
    const auto node = *it;
    const auto& u = up[node];
    if (tree.is_root(node)) {
      const double a = log_prior[0] + u[0];
      const double b = log_prior[1] + u[1];
      const double z = log_add(a, b);
      if (z == kNegInf || !std::isfinite(z))
        throw DataError("evidence has zero probability under the model");
      total += z;
      belief[node] = {a - z, b - z};
    } else {
      const auto p = static_cast<std::size_t>(tree.parent[node]);
      std::array<std::array<double, 2>, 2> joint{};
      double z = kNegInf;
      for (int yc = 0; yc < 2; ++yc) {
        for (int yp = 0; yp < 2; ++yp) {
          const double outside = log_sub_message(belief[p][yp], msg[node][yp]);
          joint[yc][yp] = lt[yc][yp] == kNegInf || outside == kNegInf || u[yc] == kNegInf
                              ? kNegInf
                              : outside + lt[yc][yp] + u[yc];
          z = log_add(z, joint[yc][yp]);
        }
      }
      if (z == kNegInf) throw DataError("evidence has zero probability under the model");
      auto& table = post.pairwise[node];
      for (int yc = 0; yc < 2; ++yc)
        for (int yp = 0; yp < 2; ++yp) table[yc][yp] = std::exp(joint[yc][yp] - z);
      belief[node] = {log_add(joint[0][0], joint[0][1]) - z, log_add(joint[1][0], joint[1][1]) - z};
    }
    post.marginal[node] = std::exp(belief[node][1]);
  }
  post.log_likelihood = total;
  return post;
}

TreePosteriors e_step(const HmtModel& model, const FlowTree& tree,
                      const Eigen::Ref<const Eigen::MatrixXd>& features) {
  check_aligned(tree, features.rows());
  return e_step(model, tree, log_emissions(model, features));
}

std::optional<double> estimate_rho(const TreePosteriors& posteriors, const FlowTree& tree) {
  double flooded_pairs = 0.0;
  double flooded_parents = 0.0;
  for (std::size_t n = 0; n < tree.size(); ++n) {
    if (tree.is_root(n)) continue;
    const auto& t = posteriors.pairwise[n];
    flooded_pairs += t[1][1];
    flooded_parents += t[0][1] + t[1][1];
  }
  if (!(flooded_parents > 0.0)) return std::nullopt;
  return flooded_pairs / flooded_parents;
}

MStepResult m_step(const TreePosteriors& posteriors, const FlowTree& tree,
                   const Eigen::Ref<const Eigen::MatrixXd>& features,
                   const std::optional<HmtModel>& previous) {
  check_aligned(tree, features.rows());
  if (posteriors.marginal.size() != tree.size() || posteriors.pairwise.size() != tree.size())
    throw DimError("posteriors do not match the tree");

  MStepResult out;
  HmtModel& model = out.model;

  double root_mass = 0.0;
  for (const auto r : tree.roots) root_mass += posteriors.marginal[r];
  model.pi1 = tree.roots.empty() ? (previous ? previous->pi1 : 0.5)
                                 : root_mass / static_cast<double>(tree.roots.size());

  if (const auto rho = estimate_rho(posteriors, tree)) {
    // rho = 0 would make flooded parents impossible; keep it inside (0, 1].
    model.rho = std::clamp(*rho, 1e-12, 1.0);
  } else {
    model.rho = previous ? previous->rho : 0.99;
    out.rho_kept = true;
  }

  const auto n = static_cast<Eigen::Index>(tree.size());
  Eigen::VectorXd w1(n), w0(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w1[i] = posteriors.marginal[static_cast<std::size_t>(i)];
    w0[i] = 1.0 - w1[i];
  }
  model.components[0] = weighted_mle(features, w0);
  model.components[1] = weighted_mle(features, w1);
  return out;
}

HmtFit em_fit(const Eigen::Ref<const Eigen::MatrixXd>& features, FlowTree tree,
              const std::vector<std::int8_t>& labels, const EmConfig& config) {
  check_aligned(tree, features.rows());
  if (labels.size() != tree.size()) throw DimError("label vector does not match the tree");
  if (!(config.rho_init > 0.0 && config.rho_init <= 1.0)) throw InitError("rho_init must lie in (0,1]");
  if (!(config.pi_init >= 0.0 && config.pi_init <= 1.0)) throw InitError("pi_init must lie in [0,1]");

  std::array<Eigen::VectorXd, 2> weights{Eigen::VectorXd::Zero(features.rows()),
                                         Eigen::VectorXd::Zero(features.rows())};
  std::array<std::size_t, 2> counts{0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    weights[labels[i]][static_cast<Eigen::Index>(i)] = 1.0;
    ++counts[labels[i]];
  }
  for (int c = 0; c < 2; ++c)
    if (counts[c] < 2)
      throw InitError("class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                      " labels; at least 2 are required");

  HmtFit fit;
  fit.model.rho = config.rho_init;
  fit.model.pi1 = config.pi_init;
  fit.model.components[0] = weighted_mle(features, weights[0]);
  fit.model.components[1] = weighted_mle(features, weights[1]);
  fit.tree = std::move(tree);

  auto emissions = [&](const HmtModel& model) {
    EmissionTable em = log_emissions(model, features);
    if (config.clamp_labels) {
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0) em.log(static_cast<Eigen::Index>(i), 1 - labels[i]) = kNegInf;
    }
    return em;
  };

  TreePosteriors post = e_step(fit.model, fit.tree, emissions(fit.model));
  fit.trace.snapshots.push_back({0, fit.model.rho, fit.model.pi1, fit.model.components,
                                 post.log_likelihood, std::numeric_limits<double>::quiet_NaN()});
  auto params = flatten_parameters(fit.model.rho, fit.model.pi1, fit.model.components);
  for (int it = 1; it <= config.max_iter; ++it) {
    MStepResult step;
    try {
      step = m_step(post, fit.tree, features, fit.model);
    } catch (const DegenerateError& err) {
      throw DegenerateError(std::string(err.what()) + " at iteration " + std::to_string(it));
    }
    if (step.rho_kept) fit.rho_kept_iterations.push_back(it);
    fit.model = step.model;
    post = e_step(fit.model, fit.tree, emissions(fit.model));
    auto next = flatten_parameters(fit.model.rho, fit.model.pi1, fit.model.components);
    const double change = max_relative_change(params, next);
    params = std::move(next);
    fit.trace.snapshots.push_back(
        {it, fit.model.rho, fit.model.pi1, fit.model.components, post.log_likelihood, change});
    if (change < config.tol) {
      fit.trace.converged = true;
      break;
    }
  }
  return fit;
}

HmtFit em_fit(const RasterScene& scene, const LabelSet& labels, const EmConfig& config) {
  const auto elevation = elevation_values(scene);
  auto tree = build_flow_tree(elevation, scene.width, scene.height, config.neighborhood);
  return em_fit(feature_matrix(scene, false), std::move(tree), labels.dense(scene.width, scene.height),
                config);
}

MapResult map_decode(const HmtModel& model, const FlowTree& tree,
                     const EmissionTable& log_emission) {
  check_model(model);
  check_aligned(tree, log_emission.rows());
  const std::size_t n = tree.size();
  const auto lt = log_transition(model.rho);

  std::vector<std::array<double, 2>> score(n), best(n);
  std::vector<std::array<std::uint8_t, 2>> choice(n, {0, 0});
  for (const auto node : tree.topo_order) {
    const auto row = static_cast<Eigen::Index>(node);
    auto& s = score[node];
    s = {log_emission.log(row, 0), log_emission.log(row, 1)};
    for (const auto child : tree.children[node]) {
      s[0] += best[child][0];
      s[1] += best[child][1];
    }
    if (!tree.is_root(node)) {
      for (int yp = 0; yp < 2; ++yp) {
        const double v0 = lt[0][yp] + s[0];
        const double v1 = lt[1][yp] + s[1];
        const bool flood = v1 > v0;
        best[node][yp] = flood ? v1 : v0;
        choice[node][yp] = flood ? 1 : 0;
      }
    }
  }

  MapResult out;
  out.labels.assign(n, 0);
  const std::array<double, 2> log_prior{safe_log(model.prior(0)), safe_log(model.prior(1))};
  for (auto it = tree.topo_order.rbegin(); it != tree.topo_order.rend(); ++it) {
    const auto node = *it;
    if (tree.is_root(node)) {
      const double v0 = log_prior[0] + score[node][0];
      const double v1 = log_prior[1] + score[node][1];
      out.labels[node] = v1 > v0 ? 1 : 0;
      out.log_joint += std::max(v0, v1);
    } else {
      out.labels[node] = choice[node][out.labels[static_cast<std::size_t>(tree.parent[node])]];
    }
  }
  return out;
}

MapResult map_decode(const HmtModel& model, const FlowTree& tree,
                     const Eigen::Ref<const Eigen::MatrixXd>& features) {
  check_aligned(tree, features.rows());
  return map_decode(model, tree, log_emissions(model, features));
}

double log_joint(const HmtModel& model, const FlowTree& tree,
                 const EmissionTable& log_emission,
                 std::span<const std::uint8_t> labels) {
  check_aligned(tree, log_emission.rows());
  if (labels.size() != tree.size()) throw DimError("label count does not match the tree");
  const auto lt = log_transition(model.rho);
  double total = 0.0;
  for (std::size_t n = 0; n < tree.size(); ++n) {
    const int y = labels[n];
    total += log_emission.log(static_cast<Eigen::Index>(n), y);
    total += tree.is_root(n) ? safe_log(model.prior(y))
                             : lt[y][labels[static_cast<std::size_t>(tree.parent[n])]];
  }
  return total;
}

bool is_monotone_flood(const FlowTree& tree, std::span<const std::uint8_t> labels) {
  for (std::size_t n = 0; n < tree.size(); ++n)
    if (!tree.is_root(n) && labels[n] == 1 && labels[static_cast<std::size_t>(tree.parent[n])] == 0)
      return false;
  return true;
}

}  // namespace ssem::hmt
