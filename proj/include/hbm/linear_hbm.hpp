#pragma once

#include "hbm/gauss.hpp"
#include "hbm/samplers.hpp"

#include <span>
#include <vector>

namespace hbm::linear {

/// y ~ N(A^T theta, sigma_noise^2 I); A is n_theta x n_data.
struct LinearModel {
  Matrix A;
  double sigma_noise = 1.0;

  Eigen::Index n_theta() const { return A.rows(); }
  Eigen::Index n_data() const { return A.cols(); }
  void validate() const;
};

/// Per-dataset Gaussian reduction of the likelihood in theta.
struct GaussianSummary {
  Vector theta_star;
  Matrix sigma_star;

  GaussianNd as_gaussian() const { return {theta_star, sigma_star}; }
};

/// G(theta) = b - (A c)^T theta; failure is G <= 0.
struct LinearLimitState {
  double b = 0.0;
  Vector c;
};

/// Independent uniform box over psi = (mu_1..mu_n, sigma_1..sigma_n).
struct HyperBox {
  double mu_lo = 0.5;
  double mu_hi = 1.5;
  double sigma_lo = 1e-4;
  double sigma_hi = 0.5;

  Vector lower(Eigen::Index n_theta) const;
  Vector upper(Eigen::Index n_theta) const;
  bool contains(const HyperParams& hp) const;
};

GaussianSummary reduce_dataset(const LinearModel& model, const Vector& y);

/// Classical (pooled) posterior: every dataset shares A, so the stacked
/// normal equations reduce to n_datasets * A A^T.
GaussianSummary cbm_posterior(const LinearModel& model, std::span<const Vector> datasets);

/// log p(mu, sigma | D) up to a constant: uniform box prior plus
/// sum_i log N(mu | theta*_i, diag(sigma^2) + Sigma*_i).
class HyperPosterior {
 public:
  HyperPosterior(std::vector<GaussianSummary> summaries, HyperBox prior);

  double operator()(const HyperParams& hp) const;
  /// psi packed as (mu, sigma).
  double log_density(const Vector& psi) const;
  double log_likelihood(const HyperParams& hp) const;

  Eigen::Index n_theta() const { return n_theta_; }
  const HyperBox& prior() const { return prior_; }
  const std::vector<GaussianSummary>& summaries() const { return summaries_; }

 private:
  std::vector<GaussianSummary> summaries_;
  HyperBox prior_;
  Eigen::Index n_theta_ = 0;
  // Sufficient statistics when every Sigma*_i is identical.
  bool shared_cov_ = false;
  Vector mean_star_;
  Matrix scatter_;
};

double hyper_log_posterior(const HyperParams& hp, const std::vector<GaussianSummary>& summaries,
                           const HyperBox& prior);

HyperParams unpack_hyper(const Vector& psi);
Vector pack_hyper(const HyperParams& hp);

/// TMCMC over psi = (mu, sigma); draws are n x 2 n_theta.
SampleSet sample_hyper_posterior(const std::vector<GaussianSummary>& summaries, const HyperBox& prior,
                                 const TmcmcConfig& cfg, std::uint64_t seed);

/// Reliability index for theta ~ N(mean, cov): (b - w^T mean) / sqrt(w^T cov w), w = A c.
double reliability_index(const Vector& mean, const Matrix& cov, const LinearLimitState& ls,
                         const LinearModel& model);
double reliability_index(const HyperParams& hp, const LinearLimitState& ls, const LinearModel& model);

/// Average of Phi(-beta) over the hyper samples (rows packed as (mu, sigma)).
double failure_probability_linear(const SampleSet& hyper_samples, const LinearLimitState& ls,
                                  const LinearModel& model);

/// The same average evaluated at every b in `thresholds`.
std::vector<double> failure_curve_linear(const SampleSet& hyper_samples, const Vector& c,
                                         std::span<const double> thresholds, const LinearModel& model);

/// Phi(-beta) curve for a single Gaussian over theta (the classical posterior).
std::vector<double> failure_curve_gaussian(const GaussianSummary& posterior, const Vector& c,
                                           std::span<const double> thresholds, const LinearModel& model);

/// Thresholds b whose conditional failure probability at the mean hyper
/// sample is log-spaced from p_hi down to p_lo.
std::vector<double> threshold_grid(const SampleSet& hyper_samples, const Vector& c, const LinearModel& model,
                                   int n_points = 50, double p_hi = 0.5, double p_lo = 1e-6);

/// b at which the hyper-averaged failure probability equals p (bisection).
double threshold_at_probability(const SampleSet& hyper_samples, const Vector& c, const LinearModel& model,
                                double p);

// Synthetic data.

/// n_theta x n_data matrix with i.i.d. U[lo, hi] entries.
Matrix random_design(Eigen::Index n_theta, Eigen::Index n_data, Rng& rng, double lo = 1.0, double hi = 5.0);

struct SimulatedLinear {
  std::vector<Vector> datasets;
  std::vector<Vector> truth;  // per-dataset theta_i; diagnostics only
};

/// theta_i ~ N(mu, diag(sigma^2)) and y_i = A^T theta_i + noise; dataset i
/// uses split_stream(seed, i).
SimulatedLinear simulate_datasets(const LinearModel& model, const HyperParams& generation, int n_datasets,
                                  std::uint64_t seed);

}  // namespace hbm::linear
