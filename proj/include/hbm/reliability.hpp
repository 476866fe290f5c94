#pragma once

#include "hbm/samplers.hpp"
#include "hbm/shear_model.hpp"
#include "hbm/subset_simulation.hpp"

#include <atomic>
#include <memory>
#include <cstdint>
#include <string>
#include <vector>

namespace hbm::reliability {

/// Failure when the peak displacement reaches d0. dof < 0 takes the maximum
/// over all DOFs (and time).
struct DisplacementLimitState {
  double d0 = 0.0;
  int dof = -1;

  void validate() const;
};

/// White-noise input: phi ~ N(0, I_{n_phi}), held as a point force.
struct UncertainInput {
  int n_phi = 1000;
  double dt = 0.005;
  double scale = 1.0;
  int applied_dof = 2;

  dynamics::Excitation excitation(const Eigen::Ref<const Vector>& phi) const;
};

/// theta = mean + chol * u_theta.
struct ThetaDistribution {
  Vector mean;
  Matrix chol;  // lower triangular

  static ThetaDistribution diagonal(const Vector& mean, const Vector& stddev);
  /// Gaussian moment-matched to the rows of `draws`.
  static ThetaDistribution moment_matched(const Matrix& draws);
  static ThetaDistribution point(const Vector& mean);

  Eigen::Index dim() const { return mean.size(); }
};

struct ReliabilitySetup {
  dynamics::ShearModel model;  // theta replaced per evaluation
  UncertainInput input;
};

/// Deterministic map u = (u_theta, u_phi) -> peak displacement. theta entries
/// below 1e-3 are clamped and counted.
class PeakResponse {
 public:
  PeakResponse(ReliabilitySetup setup, ThetaDistribution theta, int dof = -1);

  double operator()(const Vector& u) const;
  Eigen::Index dim() const { return theta_.dim() + setup_.input.n_phi; }
  long long clamp_events() const { return clamps_->load(); }

 private:
  ReliabilitySetup setup_;
  ThetaDistribution theta_;
  int dof_;
  std::shared_ptr<std::atomic<long long>> clamps_;
};

/// One subset-simulation run of P[peak >= d0].
SubsetResult failure_probability(const PeakResponse& response, const DisplacementLimitState& ls,
                                 const SubsetSimConfig& cfg, std::uint64_t seed);

struct FailureCurve {
  std::string method;
  std::vector<double> d0;
  std::vector<double> p_f;
  std::vector<int> n_censored;  // censored runs contributing to each point
  int n_hyper = 1;              // runs averaged per point
  long long clamp_events = 0;
  long long n_evaluations = 0;

  bool monotone_non_increasing() const;
};

/// Columns (mu_1..mu_n, sigma_1..sigma_n, ...) of a hyper sample set, averaged.
ThetaDistribution mean_hyper_distribution(const SampleSet& hyper, int n_theta);

/// Curve for a single theta distribution; point j uses derive_seed(seed, j).
FailureCurve failure_curve(const ReliabilitySetup& setup, const ThetaDistribution& theta,
                           const std::vector<double>& d0_grid, const SubsetSimConfig& cfg, std::uint64_t seed,
                           const std::string& method);

/// theta ~ N(mean mu, diag(mean sigma)^2).
FailureCurve failure_prob_mean_hyper(const SampleSet& hyper, int n_theta, const ReliabilitySetup& setup,
                                     const std::vector<double>& d0_grid, const SubsetSimConfig& cfg,
                                     std::uint64_t seed);

/// Average of per-sample curves over M hyper samples drawn without replacement.
FailureCurve failure_prob_full_hyper(const SampleSet& hyper, int n_theta, int m, const ReliabilitySetup& setup,
                                     const std::vector<double>& d0_grid, const SubsetSimConfig& cfg,
                                     std::uint64_t seed);

/// theta from the Gaussian moment-matched to the first n_theta CBM columns.
FailureCurve failure_prob_cbm(const SampleSet& cbm, int n_theta, const ReliabilitySetup& setup,
                              const std::vector<double>& d0_grid, const SubsetSimConfig& cfg, std::uint64_t seed);

/// Peak displacements of n predictive draws; draw i uses split_stream(seed, i)
/// so different theta distributions share input realisations.
std::vector<double> predictive_peaks(const ReliabilitySetup& setup, const ThetaDistribution& theta, int n,
                                     std::uint64_t seed, int dof = -1);

/// Predictive draws under the hyper-sample mixture: draw i takes the same
/// u as predictive_peaks and a uniformly chosen hyper row.
std::vector<double> predictive_peaks_hyper(const ReliabilitySetup& setup, const SampleSet& hyper, int n_theta, int n,
                                           std::uint64_t seed, int dof = -1);

/// n_points values from the median of n_crude predictive peaks up to the d0
/// at which P_F is about p_lo.
std::vector<double> d0_grid(const ReliabilitySetup& setup, const ThetaDistribution& theta, int n_points,
                            double p_lo, int n_crude, const SubsetSimConfig& cfg, std::uint64_t seed);

}  // namespace hbm::reliability
