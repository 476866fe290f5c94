#pragma once

#include "hbm/samplers.hpp"
#include "hbm/shear_model.hpp"

#include <string>
#include <vector>

namespace hbm::two_stage {

/// Per-dataset parameters (theta_1..theta_n, sigma_pred), packed as a vector.
struct DynamicParams {
  Vector theta;
  double sigma_pred = 0.02;

  Vector pack() const;
  static DynamicParams unpack(const Vector& v);
};

/// Population hyper parameters over (theta, sigma_pred): theta ~ N(mu_theta,
/// diag(sigma_theta^2)), sigma_pred ~ N(mu_sigma, sigma_sigma^2) truncated to > 0.
/// Packed as (mu_theta, sigma_theta, mu_sigma, sigma_sigma).
struct DynamicHyperParams {
  Vector mu_theta;
  Vector sigma_theta;
  double mu_sigma = 0.02;
  double sigma_sigma = 1e-3;

  Vector pack() const;
  static DynamicHyperParams unpack(const Vector& v);
  void validate() const;
};

/// Forward-model context shared by every dataset: structure constants and
/// the known identification excitation.
struct ForwardSetup {
  dynamics::ShearModel model;  // theta is overwritten per evaluation
  dynamics::Excitation excitation;
};

/// sum_{c,t} log N(y_ct | yhat_ct(theta), (sigma_pred * RMS_c(yhat))^2).
double log_likelihood_dynamic(const DynamicParams& params, const Matrix& data, const ForwardSetup& setup);

/// Uniform sampling prior for stage one: theta_k in [theta_lo, theta_hi],
/// sigma_pred in [sigma_lo, sigma_hi].
struct StageOnePrior {
  double theta_lo = 0.5;
  double theta_hi = 1.5;
  double sigma_lo = 1e-4;
  double sigma_hi = 0.1;

  Vector lower(int n_theta) const;
  Vector upper(int n_theta) const;
};

struct StageOneResult {
  SampleSet samples;  // rows packed as DynamicParams
  int dataset_id = 0;
  std::string fingerprint;
};

StageOneResult stage_one(const Matrix& data, const ForwardSetup& setup, const StageOnePrior& prior,
                         const TmcmcConfig& cfg, std::uint64_t seed, int dataset_id = 0);

/// Uniform box hyper prior.
struct DynamicHyperBox {
  double mu_theta_lo = 0.5;
  double mu_theta_hi = 1.5;
  double sigma_theta_lo = 1e-4;
  double sigma_theta_hi = 0.3;
  double mu_sigma_lo = 1e-4;
  double mu_sigma_hi = 0.1;
  double sigma_sigma_lo = 1e-6;
  double sigma_sigma_hi = 0.05;

  Vector lower(int n_theta) const;
  Vector upper(int n_theta) const;
  bool contains(const Vector& packed) const;
};

/// Monte-Carlo marginal hyper posterior:
///   log p(psi) + sum_i log[(1/N_s) sum_l N(atom_il | psi)].
/// Holds only the stage-one atoms; evaluating it never runs the forward model.
class McHyperPosterior {
 public:
  /// `thinning` keeps every j-th atom of each dataset (1 = all).
  McHyperPosterior(const std::vector<StageOneResult>& stage1, DynamicHyperBox prior, int thinning = 1);

  double operator()(const DynamicHyperParams& hp) const;
  double log_density(const Vector& packed) const;
  double log_likelihood(const Vector& packed) const;

  int n_theta() const { return n_theta_; }
  std::size_t n_datasets() const { return atoms_.size(); }
  const DynamicHyperBox& prior() const { return prior_; }

 private:
  std::vector<Eigen::ArrayXXd> atoms_;  // per dataset, N_s x (n_theta + 1)
  DynamicHyperBox prior_;
  int n_theta_ = 0;
};

double hyper_log_posterior_mc(const DynamicHyperParams& hp, const std::vector<StageOneResult>& stage1,
                              const DynamicHyperBox& prior);

SampleSet stage_two(const std::vector<StageOneResult>& stage1, const DynamicHyperBox& prior,
                    const TmcmcConfig& cfg, std::uint64_t seed, int thinning = 1);

/// Classical pooled posterior: one TMCMC run with the summed log-likelihood.
SampleSet cbm_dynamic(const std::vector<Matrix>& datasets, const ForwardSetup& setup, const StageOnePrior& prior,
                      const TmcmcConfig& cfg, std::uint64_t seed);

}  // namespace hbm::two_stage
