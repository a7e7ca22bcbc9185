#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace ssem {

/// Mean and full covariance of one class-conditional feature density.
struct GaussianParams {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::Index dim() const { return mean.size(); }
};

/// Builds params after symmetrizing cov; throws DimError on shape mismatch
/// and DegenerateError when cov is not positive definite.
GaussianParams make_gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov);

/// Cached Cholesky factor for repeated log-density evaluation.
class GaussianDensity {
 public:
  explicit GaussianDensity(const GaussianParams& params);

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::Index dim() const { return mean_.size(); }

 private:
  Eigen::VectorXd mean_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_norm_ = 0.0;  // -0.5 * (m log 2pi + log det cov)
};

/// ln N(x; mean, cov).
double log_pdf(const GaussianParams& g, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Log-density of every row of `points`.
Eigen::VectorXd log_pdf_rows(const GaussianParams& g, const Eigen::Ref<const Eigen::MatrixXd>& points);

/// Smallest e in {epsilon, 10 epsilon, 100 epsilon, ...} such that cov + e I
/// admits a Cholesky factorization; returns cov + e I.
Eigen::MatrixXd regularize(const Eigen::MatrixXd& cov, double epsilon);

/// Jitter seed used by weighted_mle: 1e-9 * trace(cov) / m, falling back to
/// 1e-9 when the trace is zero.
double default_jitter(const Eigen::MatrixXd& cov);

/// Weighted mean and covariance of the rows of `points`, regularized.
/// Throws DegenerateError when the weights sum to zero and DimError when the
/// weight count does not match the number of rows.
GaussianParams weighted_mle(const Eigen::Ref<const Eigen::MatrixXd>& points,
                            const Eigen::Ref<const Eigen::VectorXd>& weights);

}  // namespace ssem
