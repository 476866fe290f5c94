#pragma once

#include <Eigen/Dense>

#include <random>
#include <stdexcept>

namespace hbm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Lower Cholesky factor of an SPD matrix. A single retry with jitter
/// 1e-10 * trace / d on the diagonal is attempted before giving up.
Matrix cholesky_lower(const Matrix& cov);

/// Multivariate normal with a cached Cholesky factor.
class GaussianNd {
 public:
  GaussianNd(Vector mean, Matrix cov);

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  const Matrix& chol() const { return chol_; }
  Eigen::Index dim() const { return mean_.size(); }

  /// log N(x | mean, cov)
  double logpdf(const Eigen::Ref<const Vector>& x) const;

  /// Row-per-draw matrix of n i.i.d. samples.
  Matrix sample(std::mt19937_64& rng, Eigen::Index n) const;

 private:
  Vector mean_;
  Matrix cov_;
  Matrix chol_;
  double log_norm_ = 0.0;  // -0.5 * (d log 2pi + log det cov)
};

/// Hyper parameters (mu, sigma) of a population N(mu, diag(sigma^2)).
struct HyperParams {
  Vector mu;
  Vector sigma;

  HyperParams() = default;
  HyperParams(Vector mu_, Vector sigma_);

  Matrix covariance() const;
  GaussianNd population() const { return {mu, covariance()}; }
};

/// Integral over theta of N(theta | mu, prior_cov) N(theta | theta_star, cov_star),
/// viewed as a density in mu: N(mu | theta_star, prior_cov + cov_star).
/// `prior` supplies the population covariance (its mean is not used);
/// `likelihood` is the Gaussian summary centred at theta_star.
GaussianNd convolve_marginal(const GaussianNd& prior, const GaussianNd& likelihood);

double std_normal_pdf(double x);
double std_normal_logpdf(double x);
double std_normal_cdf(double x);
/// log Phi(x), finite far into the lower tail.
double std_normal_logcdf(double x);
/// Inverse of std_normal_cdf; throws std::domain_error outside (0, 1).
double std_normal_quantile(double p);

}  // namespace hbm
