#include "hbm/subset_simulation.hpp"

#include "hbm/parallel.hpp"
#include "hbm/random.hpp"
#include "hbm/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hbm::reliability {

namespace {

Vector standard_normal(Rng& rng, Eigen::Index dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector u(dim);
  for (Eigen::Index k = 0; k < dim; ++k) u(k) = normal(rng);
  return u;
}

}  // namespace

int SubsetSimConfig::n_seeds() const { return static_cast<int>(std::lround(n_per_level * p0)); }

void SubsetSimConfig::validate() const {
  if (!(p0 > 0.0 && p0 <= 0.5)) throw std::invalid_argument("subset simulation: p0 must lie in (0, 0.5]");
  const double seeds = n_per_level * p0;
  if (std::abs(seeds - std::round(seeds)) > 1e-9 || seeds < 10.0) {
    throw std::invalid_argument("subset simulation: n_per_level * p0 must be an integer >= 10");
  }
  if (n_per_level % n_seeds() != 0) {
    throw std::invalid_argument("subset simulation: n_per_level must be a multiple of n_per_level * p0");
  }
  if (max_levels < 1) throw std::invalid_argument("subset simulation: max_levels must be >= 1");
  if (!(proposal_std >= 0.0)) throw std::invalid_argument("subset simulation: proposal_std must be >= 0");
}

std::vector<SubsetResult> subset_simulation_multi(const PerformanceFn& perf, Eigen::Index dim,
                                                 std::span<const double> offsets, const SubsetSimConfig& cfg,
                                                 std::uint64_t seed) {
  cfg.validate();
  if (dim < 1) throw std::invalid_argument("subset simulation: dim must be >= 1");
  const auto n = static_cast<std::size_t>(cfg.n_per_level);
  const auto n_seeds = static_cast<std::size_t>(cfg.n_seeds());
  const std::size_t chain_len = n / n_seeds;

  std::vector<Vector> u(n);
  std::vector<double> g(n);
  const std::uint64_t level0 = derive_seed(seed, 0);
  parallel_for(n, [&](std::size_t i) {
    Rng rng = split_stream(level0, i);
    u[i] = standard_normal(rng, dim);
    g[i] = perf(u[i]);
    if (std::isnan(g[i])) throw std::runtime_error("subset simulation: performance function returned NaN");
  });

  std::vector<SubsetResult> out(offsets.size());
  std::vector<char> open(offsets.size(), 1);
  std::size_t n_open = offsets.size();
  long long n_evaluations = static_cast<long long>(n);
  std::vector<SubsetLevel> levels;
  double level_prob = 1.0;

  for (int level = 0; n_open > 0; ++level) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g[a] < g[b]; });

    for (std::size_t k = 0; k < offsets.size(); ++k) {
      if (!open[k]) continue;
      const double c = offsets[k];
      const auto n_failed = static_cast<std::size_t>(std::count_if(g.begin(), g.end(), [c](double v) { return v <= c; }));
      if (n_failed < n_seeds && level < cfg.max_levels) continue;
      SubsetResult& r = out[k];
      r.p_f = level_prob * static_cast<double>(n_failed) / static_cast<double>(n);
      r.censored = n_failed < n_seeds;
      r.upper_bound = level_prob;
      r.levels = levels;
      r.n_evaluations = n_evaluations;
      open[k] = 0;
      --n_open;
    }
    if (n_open == 0) break;

    const double b = 0.5 * (g[order[n_seeds - 1]] + g[order[n_seeds]]);
    level_prob *= cfg.p0;

    std::vector<Vector> next_u(n);
    std::vector<double> next_g(n);
    std::vector<std::size_t> accepted(n_seeds, 0);
    std::vector<std::size_t> evaluated(n_seeds, 0);
    const std::uint64_t level_seed = derive_seed(seed, static_cast<std::uint64_t>(level) + 1);
    parallel_for(n_seeds, [&](std::size_t c) {
      Rng rng = split_stream(level_seed, c);
      Vector cur = u[order[c]];
      double cur_g = g[order[c]];
      const std::size_t base = c * chain_len;
      next_u[base] = cur;
      next_g[base] = cur_g;
      for (std::size_t s = 1; s < chain_len; ++s) {
        Vector cand = modified_metropolis_step(cur, rng, cfg.proposal_std);
        if (cand != cur) {
          const double cand_g = perf(cand);
          if (std::isnan(cand_g)) throw std::runtime_error("subset simulation: performance function returned NaN");
          ++evaluated[c];
          if (cand_g <= b) {
            cur = std::move(cand);
            cur_g = cand_g;
            ++accepted[c];
          }
        }
        next_u[base + s] = cur;
        next_g[base + s] = cur_g;
      }
    });

    const auto n_eval = std::accumulate(evaluated.begin(), evaluated.end(), std::size_t{0});
    const auto n_acc = std::accumulate(accepted.begin(), accepted.end(), std::size_t{0});
    n_evaluations += static_cast<long long>(n_eval);
    levels.push_back({b, n_eval ? static_cast<double>(n_acc) / static_cast<double>(n_eval) : 0.0});
    u = std::move(next_u);
    g = std::move(next_g);
  }
  return out;
}

SubsetResult subset_simulation(const PerformanceFn& perf, Eigen::Index dim, const SubsetSimConfig& cfg,
                               std::uint64_t seed) {
  const double zero = 0.0;
  return subset_simulation_multi(perf, dim, std::span<const double>(&zero, 1), cfg, seed).front();
}

CrudeMcResult crude_monte_carlo(const PerformanceFn& perf, Eigen::Index dim, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("crude_monte_carlo: n must be >= 1");
  std::vector<char> failed(static_cast<std::size_t>(n));
  parallel_for(failed.size(), [&](std::size_t i) {
    Rng rng = split_stream(seed, i);
    failed[i] = perf(standard_normal(rng, dim)) <= 0.0;
  });
  const double p = static_cast<double>(std::count(failed.begin(), failed.end(), 1)) / n;
  return {p, std::sqrt(p * (1.0 - p) / n)};
}

}  // namespace hbm::reliability
