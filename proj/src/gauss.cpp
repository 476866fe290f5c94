#include "hbm/gauss.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <numbers>
#include <string>

namespace hbm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_symmetric(const Matrix& cov) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) {
    throw std::invalid_argument("covariance must be a non-empty square matrix");
  }
  const double scale = std::max(cov.cwiseAbs().maxCoeff(), 1e-300);
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument("covariance is not symmetric");
  }
}

}  // namespace

Matrix cholesky_lower(const Matrix& cov) {
  check_symmetric(cov);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  const auto d = static_cast<double>(cov.rows());
  Matrix jittered = cov;
  jittered.diagonal().array() += 1e-10 * cov.trace() / d;
  llt.compute(jittered);
  if (llt.info() != Eigen::Success) {
    throw std::domain_error("covariance is not positive definite");
  }
  return llt.matrixL();
}

GaussianNd::GaussianNd(Vector mean, Matrix cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != mean_.size()) {
    throw std::invalid_argument("mean/covariance dimension mismatch");
  }
  chol_ = cholesky_lower(cov_);
  const double log_det = 2.0 * chol_.diagonal().array().log().sum();
  log_norm_ = -0.5 * (static_cast<double>(dim()) * kLog2Pi + log_det);
}

double GaussianNd::logpdf(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != dim()) {
    throw std::invalid_argument("logpdf: expected dimension " + std::to_string(dim()) +
                                ", got " + std::to_string(x.size()));
  }
  if (!x.allFinite()) throw std::invalid_argument("logpdf: non-finite argument");
  const Vector z = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
  return log_norm_ - 0.5 * z.squaredNorm();
}

Matrix GaussianNd::sample(std::mt19937_64& rng, Eigen::Index n) const {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(n, dim());
  Vector z(dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < dim(); ++k) z(k) = normal(rng);
    out.row(i) = (mean_ + chol_ * z).transpose();
  }
  return out;
}

HyperParams::HyperParams(Vector mu_, Vector sigma_) : mu(std::move(mu_)), sigma(std::move(sigma_)) {
  if (mu.size() != sigma.size()) throw std::invalid_argument("HyperParams: size mismatch");
  if ((sigma.array() <= 0.0).any()) throw std::invalid_argument("HyperParams: sigma must be > 0");
}

Matrix HyperParams::covariance() const { return sigma.array().square().matrix().asDiagonal(); }

GaussianNd convolve_marginal(const GaussianNd& prior, const GaussianNd& likelihood) {
  if (prior.dim() != likelihood.dim()) {
    throw std::invalid_argument("convolve_marginal: dimension mismatch");
  }
  return {likelihood.mean(), prior.cov() + likelihood.cov()};
}

double std_normal_pdf(double x) { return std::exp(std_normal_logpdf(x)); }

double std_normal_logpdf(double x) { return -0.5 * (kLog2Pi + x * x); }

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double std_normal_logcdf(double x) {
  if (x > -20.0) return std::log(std_normal_cdf(x));
  const double r = 1.0 / (x * x);
  return std_normal_logpdf(x) - std::log(-x) + std::log1p(-r * (1.0 - 3.0 * r * (1.0 - 5.0 * r)));
}

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("std_normal_quantile: p must lie in (0, 1)");
  }
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

}  // namespace hbm
