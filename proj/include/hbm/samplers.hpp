#pragma once

#include "hbm/gauss.hpp"
#include "hbm/random.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace hbm {

using LogDensityFn = std::function<double(const Vector&)>;

/// Unnormalized target: prior * likelihood over a box-bounded support.
/// log_prior must return -inf outside [lower, upper]; sample_prior draws
/// from the (proper) prior.
struct TargetDensity {
  Eigen::Index dim = 0;
  LogDensityFn log_prior;
  LogDensityFn log_likelihood;
  std::function<Vector(Rng&)> sample_prior;
  Vector lower;
  Vector upper;

  bool in_support(const Vector& x) const;
};

/// Uniform prior on the closed box [lower, upper].
TargetDensity uniform_box_target(Vector lower, Vector upper, LogDensityFn log_likelihood);

struct SampleSet {
  Matrix draws;             // n x d, one draw per row
  Vector log_likelihoods;   // length n
  std::uint64_t seed = 0;
  std::optional<double> log_evidence;
  std::vector<double> betas;  // tempering schedule, TMCMC only

  Eigen::Index size() const { return draws.rows(); }
  Eigen::Index dim() const { return draws.cols(); }
  Vector mean() const;
  Matrix covariance() const;
  Vector stddev() const;
};

struct TmcmcConfig {
  int n_samples = 5000;
  double proposal_scale = 0.2;
  double target_cov_of_weights = 1.0;
  int max_stages = 100;
  int chain_length_per_sample = 1;

  void validate() const;
};

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Transitional MCMC. Tempering increments are found by bisection so that the
/// coefficient of variation of the incremental weights hits the target;
/// each stage resamples multinomially and then runs Metropolis moves with
/// covariance proposal_scale^2 * (weighted sample covariance).
///
/// Each stage's randomness is keyed by (seed, stage, particle), so results do
/// not depend on num_threads().
SampleSet tmcmc(const TargetDensity& target, const TmcmcConfig& cfg, std::uint64_t seed);

/// One component-wise modified Metropolis move in standard-normal space.
/// Limit-state filtering of the candidate is the caller's job.
Vector modified_metropolis_step(const Vector& current, Rng& rng, double proposal_std);

}  // namespace hbm
