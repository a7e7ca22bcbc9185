#include "ssem/gaussian.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "ssem/error.hpp"
#include "ssem/parallel.hpp"

namespace ssem {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

GaussianParams make_gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size())
    throw DimError("covariance shape does not match mean dimension");
  Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  if (Eigen::LLT<Eigen::MatrixXd>(sym).info() != Eigen::Success)
    throw DegenerateError("covariance is not positive definite");
  return {std::move(mean), std::move(sym)};
}

GaussianDensity::GaussianDensity(const GaussianParams& params)
    : mean_(params.mean), llt_(params.cov) {
  if (params.cov.rows() != mean_.size() || params.cov.cols() != mean_.size())
    throw DimError("covariance shape does not match mean dimension");
  if (llt_.info() != Eigen::Success)
    throw DegenerateError("covariance is not positive definite");
  const double log_det = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
  log_norm_ = -0.5 * (static_cast<double>(mean_.size()) * kLog2Pi + log_det);
}

double GaussianDensity::log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != mean_.size())
    throw DimError("point has dimension " + std::to_string(x.size()) + ", expected " +
                   std::to_string(mean_.size()));
  const Eigen::VectorXd z = llt_.matrixL().solve(x - mean_);
  return log_norm_ - 0.5 * z.squaredNorm();
}

double log_pdf(const GaussianParams& g, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return GaussianDensity(g).log_pdf(x);
}

Eigen::VectorXd log_pdf_rows(const GaussianParams& g,
                             const Eigen::Ref<const Eigen::MatrixXd>& points) {
  if (points.cols() != g.dim()) throw DimError("feature dimension does not match model");
  const GaussianDensity density(g);
  Eigen::VectorXd out(points.rows());
  parallel_for(static_cast<std::size_t>(points.rows()), [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    out[row] = density.log_pdf(points.row(row).transpose());
  });
  return out;
}

Eigen::MatrixXd regularize(const Eigen::MatrixXd& cov, double epsilon) {
  const Eigen::Index m = cov.rows();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);
  double e = epsilon > 0.0 ? epsilon : std::numeric_limits<double>::min();
  while (true) {
    Eigen::MatrixXd out = cov + e * eye;
    if (Eigen::LLT<Eigen::MatrixXd>(out).info() == Eigen::Success) return out;
    if (!std::isfinite(e * 10.0)) return out;  // unreachable for finite input
    e *= 10.0;
  }
}

double default_jitter(const Eigen::MatrixXd& cov) {
  const double scale = cov.trace() / static_cast<double>(cov.rows());
  return 1e-9 * ((scale > 0.0 && std::isfinite(scale)) ? scale : 1.0);
}

GaussianParams weighted_mle(const Eigen::Ref<const Eigen::MatrixXd>& points,
                            const Eigen::Ref<const Eigen::VectorXd>& weights) {
  if (weights.size() != points.rows())
    throw DimError("weight count does not match point count");
  const Eigen::Index n = points.rows();
  const Eigen::Index m = points.cols();
  double total = 0.0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    total += weights[i];
    mean += weights[i] * points.row(i).transpose();
  }
  if (!(total > 0.0)) throw DegenerateError("weights sum to zero");
  mean /= total;

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (weights[i] == 0.0) continue;
    const Eigen::VectorXd d = points.row(i).transpose() - mean;
    cov.noalias() += weights[i] * (d * d.transpose());
  }
  cov /= total;
  cov = 0.5 * (cov + cov.transpose());
  return {std::move(mean), regularize(cov, default_jitter(cov))};
}

}  // namespace ssem
