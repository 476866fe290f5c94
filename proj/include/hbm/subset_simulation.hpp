#pragma once

#include "hbm/gauss.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace hbm::reliability {

/// Performance function in standard-normal space; failure is G(u) <= 0.
using PerformanceFn = std::function<double(const Vector& u)>;

struct SubsetSimConfig {
  int n_per_level = 1000;
  double p0 = 0.1;
  int max_levels = 12;
  double proposal_std = 1.0;

  int n_seeds() const;
  void validate() const;
};

struct SubsetLevel {
  double threshold = 0.0;        // intermediate level b_j on G
  double acceptance_rate = 0.0;  // fraction of chain moves that stayed in the level
};

struct SubsetResult {
  double p_f = 0.0;
  /// True when max_levels was reached before the failure domain; p_f is then
  /// the (possibly zero) partial estimate and upper_bound = p0^levels.
  bool censored = false;
  double upper_bound = 1.0;
  std::vector<SubsetLevel> levels;
  long long n_evaluations = 0;
};

/// Subset simulation with component-wise modified Metropolis chains.
/// Randomness is keyed by (seed, level, chain); results do not depend on
/// num_threads().
SubsetResult subset_simulation(const PerformanceFn& perf, Eigen::Index dim, const SubsetSimConfig& cfg,
                               std::uint64_t seed);

/// One sample path shared by the events G(u) <= offsets[k]. Each result is
/// what subset_simulation would return for G - offsets[k] up to rounding, and
/// p_f is non-increasing as the offset decreases.
std::vector<SubsetResult> subset_simulation_multi(const PerformanceFn& perf, Eigen::Index dim,
                                                 std::span<const double> offsets, const SubsetSimConfig& cfg,
                                                 std::uint64_t seed);

struct CrudeMcResult {
  double p_f = 0.0;
  double std_error = 0.0;
};

/// Direct Monte Carlo estimate of P[G(u) <= 0].
CrudeMcResult crude_monte_carlo(const PerformanceFn& perf, Eigen::Index dim, int n, std::uint64_t seed);

}  // namespace hbm::reliability
