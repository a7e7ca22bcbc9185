#include "ssem/gmm.hpp"

#include <cmath>
#include <string>

#include "ssem/error.hpp"
#include "ssem/logmath.hpp"
#include "ssem/parallel.hpp"

namespace ssem::gmm {

namespace {

void check_labels(const Eigen::Ref<const Eigen::MatrixXd>& features,
                  const std::vector<std::int8_t>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows())
    throw DimError("label vector length does not match the number of pixels");
}

struct EStep {
  Eigen::VectorXd resp0;
  Eigen::VectorXd resp1;
  double log_likelihood = 0.0;
};

EStep expectation(const GmmModel& model, const Eigen::Ref<const Eigen::MatrixXd>& features,
                  const std::vector<std::int8_t>& labels) {
  const Eigen::Index n = features.rows();
  const Eigen::VectorXd ll0 = log_pdf_rows(model.components[0], features);
  const Eigen::VectorXd ll1 = log_pdf_rows(model.components[1], features);
  const double lp0 = safe_log(model.prior(0));
  const double lp1 = safe_log(model.prior(1));

  EStep out{Eigen::VectorXd(n), Eigen::VectorXd(n), 0.0};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = lp0 + ll0[i];
    const double b = lp1 + ll1[i];
    const auto lab = labels[static_cast<std::size_t>(i)];
    if (lab >= 0) {
      out.resp0[i] = lab == 0 ? 1.0 : 0.0;
      out.resp1[i] = lab == 1 ? 1.0 : 0.0;
      out.log_likelihood += lab == 1 ? b : a;
      continue;
    }
    const double norm = log_add(a, b);
    out.resp0[i] = std::exp(a - norm);
    out.resp1[i] = std::exp(b - norm);
    out.log_likelihood += norm;
  }
  return out;
}

GmmModel maximization(const EStep& e, const Eigen::Ref<const Eigen::MatrixXd>& features, int iteration) {
  const double total0 = e.resp0.sum();
  const double total1 = e.resp1.sum();
  for (int c = 0; c < 2; ++c) {
    if (!((c == 0 ? total0 : total1) > 0.0))
      throw DegenerateError("class " + std::to_string(c) + " weight collapsed to zero at iteration " +
                            std::to_string(iteration));
  }
  GmmModel next;
  next.pi1 = total1 / (total0 + total1);
  try {
    next.components[0] = weighted_mle(features, e.resp0);
    next.components[1] = weighted_mle(features, e.resp1);
  } catch (const DegenerateError& err) {
    throw DegenerateError(std::string(err.what()) + " at iteration " + std::to_string(iteration));
  }
  return next;
}

}  // namespace

GmmModel init_from_labels(const Eigen::Ref<const Eigen::MatrixXd>& features,
                          const std::vector<std::int8_t>& labels) {
  check_labels(features, labels);
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
  GmmModel model;
  model.pi1 = static_cast<double>(counts[1]) / static_cast<double>(counts[0] + counts[1]);
  model.components[0] = weighted_mle(features, weights[0]);
  model.components[1] = weighted_mle(features, weights[1]);
  return model;
}

GmmModel init_from_labels(const RasterScene& scene, const LabelSet& labels, bool use_elevation) {
  return init_from_labels(feature_matrix(scene, use_elevation), labels.dense(scene.width, scene.height));
}

double posterior(const GmmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double a = safe_log(model.prior(0)) + log_pdf(model.components[0], x);
  const double b = safe_log(model.prior(1)) + log_pdf(model.components[1], x);
  return std::exp(b - log_add(a, b));
}

Eigen::VectorXd posterior_rows(const GmmModel& model, const Eigen::Ref<const Eigen::MatrixXd>& features) {
  const Eigen::VectorXd ll0 = log_pdf_rows(model.components[0], features);
  const Eigen::VectorXd ll1 = log_pdf_rows(model.components[1], features);
  const double lp0 = safe_log(model.prior(0));
  const double lp1 = safe_log(model.prior(1));
  Eigen::VectorXd out(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double a = lp0 + ll0[i];
    const double b = lp1 + ll1[i];
    out[i] = std::exp(b - log_add(a, b));
  }
  return out;
}

GmmFit em_fit(const Eigen::Ref<const Eigen::MatrixXd>& features,
              const std::vector<std::int8_t>& labels, const EmConfig& config) {
  GmmFit fit;
  fit.model = init_from_labels(features, labels);

  EStep e = expectation(fit.model, features, labels);
  fit.trace.snapshots.push_back({0, std::numeric_limits<double>::quiet_NaN(), fit.model.pi1,
                                 fit.model.components, e.log_likelihood,
                                 std::numeric_limits<double>::quiet_NaN()});
  auto params = flatten_parameters(std::numeric_limits<double>::quiet_NaN(), fit.model.pi1,
                                   fit.model.components);
  for (int it = 1; it <= config.max_iter; ++it) {
    fit.model = maximization(e, features, it);
    e = expectation(fit.model, features, labels);
    auto next = flatten_parameters(std::numeric_limits<double>::quiet_NaN(), fit.model.pi1,
                                   fit.model.components);
    const double change = max_relative_change(params, next);
    params = std::move(next);
    fit.trace.snapshots.push_back({it, std::numeric_limits<double>::quiet_NaN(), fit.model.pi1,
                                   fit.model.components, e.log_likelihood, change});
    if (change < config.tol) {
      fit.trace.converged = true;
      break;
    }
  }
  return fit;
}

GmmFit em_fit(const RasterScene& scene, const LabelSet& labels, bool use_elevation,
              const EmConfig& config) {
  return em_fit(feature_matrix(scene, use_elevation), labels.dense(scene.width, scene.height), config);
}

std::vector<std::uint8_t> infer(const GmmModel& model, const Eigen::Ref<const Eigen::MatrixXd>& features,
                                double cutoff) {
  const Eigen::VectorXd post = posterior_rows(model, features);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(post.size()));
  for (Eigen::Index i = 0; i < post.size(); ++i) out[static_cast<std::size_t>(i)] = post[i] >= cutoff ? 1 : 0;
  return out;
}

std::vector<std::uint8_t> infer(const GmmModel& model, const RasterScene& scene, bool use_elevation,
                                double cutoff) {
  return infer(model, feature_matrix(scene, use_elevation), cutoff);
}

}  // namespace ssem::gmm
