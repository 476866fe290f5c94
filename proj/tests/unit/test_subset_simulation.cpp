#include "doctest.h"

#include "hbm/parallel.hpp"
#include "hbm/random.hpp"
#include "hbm/subset_simulation.hpp"

#include <cmath>

using namespace hbm;
using namespace hbm::reliability;

namespace {

PerformanceFn linear_g(double beta) {
  return [beta](const Vector& u) { return beta - u(0); };
}

double geometric_mean_of_runs(double beta, int runs, std::uint64_t seed) {
  double acc = 0.0;
  for (int r = 0; r < runs; ++r) acc += std::log(subset_simulation(linear_g(beta), 2, {}, derive_seed(seed, r)).p_f);
  return std::exp(acc / runs);
}

}  // namespace

TEST_CASE("config validation") {
  SubsetSimConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.n_seeds() == 100);
  c.p0 = 0.6;
  CHECK_THROWS(c.validate());
  c = {};
  c.n_per_level = 50;
  CHECK_THROWS(c.validate());
  c = {};
  c.n_per_level = 1005;
  CHECK_THROWS(c.validate());
  c = {};
  c.max_levels = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("half-space through the origin is resolved at level zero") {
  const SubsetResult r = subset_simulation([](const Vector& u) { return -u(0); }, 2, {}, 1);
  CHECK(r.levels.empty());
  CHECK(!r.censored);
  CHECK(r.p_f == doctest::Approx(0.5).epsilon(0.1));
  CHECK(r.n_evaluations == 1000);
}

TEST_CASE("single runs fall within the accepted band") {
  const double exact = std_normal_cdf(-2.0);
  for (int s = 0; s < 5; ++s) {
    const SubsetResult r = subset_simulation(linear_g(2.0), 2, {}, 100 + s);
    CHECK(r.p_f >= 0.6 * exact);
    CHECK(r.p_f <= 1.6 * exact);
    CHECK(r.levels.size() >= 1);
    for (std::size_t j = 1; j < r.levels.size(); ++j) CHECK(r.levels[j].threshold < r.levels[j - 1].threshold);
  }
}

TEST_CASE("estimator is unbiased over repeated runs") {
  for (double beta : {2.0, 3.0, 3.5}) {
    const double exact = std_normal_cdf(-beta);
    const int runs = 60;
    Eigen::ArrayXd p(runs);
    for (int r = 0; r < runs; ++r) p(r) = subset_simulation(linear_g(beta), 2, {}, derive_seed(7, r)).p_f / exact;
    const double se = std::sqrt((p - p.mean()).square().sum() / (runs - 1) / runs);
    CHECK(std::abs(p.mean() - 1.0) < 4.0 * se);
  }
}

TEST_CASE("geometric mean over 25 runs") {
  const double exact = std_normal_cdf(-2.0);
  const double gm = geometric_mean_of_runs(2.0, 25, 7);
  CHECK(gm >= 0.85 * exact);
  CHECK(gm <= 1.15 * exact);
}

TEST_CASE("deep levels") {
  const SubsetResult r = subset_simulation(linear_g(4.5), 2, {}, 3);
  CHECK(r.levels.size() >= 5);
  CHECK(r.p_f > std_normal_cdf(-4.5) / 4.0);
  CHECK(r.p_f < std_normal_cdf(-4.5) * 4.0);
}

TEST_CASE("unreachable failure domain is censored") {
  SubsetSimConfig c;
  c.max_levels = 3;
  const SubsetResult r = subset_simulation([](const Vector& u) { return 100.0 - u(0); }, 2, c, 3);
  CHECK(r.censored);
  CHECK(r.p_f < std::pow(c.p0, c.max_levels));
  CHECK(r.upper_bound == doctest::Approx(std::pow(c.p0, c.max_levels)));
  CHECK(r.levels.size() == 3);
}

TEST_CASE("deterministic regardless of thread count") {
  set_num_threads(1);
  const SubsetResult a = subset_simulation(linear_g(3.0), 4, {}, 12);
  set_num_threads(3);
  const SubsetResult b = subset_simulation(linear_g(3.0), 4, {}, 12);
  set_num_threads(1);
  CHECK(a.p_f == b.p_f);
  REQUIRE(a.levels.size() == b.levels.size());
  for (std::size_t j = 0; j < a.levels.size(); ++j) CHECK(a.levels[j].threshold == b.levels[j].threshold);
}

TEST_CASE("agrees with crude Monte Carlo where failure is common") {
  const PerformanceFn g = [](const Vector& u) { return 2.2 - (u(0) + u(1)) / std::sqrt(2.0); };
  const CrudeMcResult mc = crude_monte_carlo(g, 2, 10000, 4);
  const SubsetResult ss = subset_simulation(g, 2, {}, 5);
  // subset-simulation c.o.v. at two levels is roughly 0.15
  const double se_ss = 0.15 * ss.p_f;
  CHECK(std::abs(ss.p_f - mc.p_f) <= 4.0 * std::sqrt(mc.std_error * mc.std_error + se_ss * se_ss));
  CHECK(mc.p_f == doctest::Approx(std_normal_cdf(-2.2)).epsilon(0.3));
  CHECK_THROWS(crude_monte_carlo(g, 2, 0, 1));
}

TEST_CASE("NaN performance is an error") {
  CHECK_THROWS(subset_simulation([](const Vector&) { return std::nan(""); }, 2, {}, 1));
}

TEST_CASE("shared-path runs reproduce separate runs") {
  const PerformanceFn g = [](const Vector& u) { return 3.0 - u(0) - 0.3 * u(1) * u(1); };
  const std::vector<double> offsets{1.0, 0.0, -0.5, -1.0};
  const auto multi = subset_simulation_multi(g, 3, offsets, {}, 41);
  REQUIRE(multi.size() == offsets.size());
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    const double c = offsets[k];
    const SubsetResult one = subset_simulation([&](const Vector& u) { return g(u) - c; }, 3, {}, 41);
    CHECK(multi[k].p_f == doctest::Approx(one.p_f).epsilon(1e-12));
    CHECK(multi[k].levels.size() == one.levels.size());
    CHECK(multi[k].n_evaluations == one.n_evaluations);
  }
}

TEST_CASE("shared-path estimates are monotone in the offset") {
  SubsetSimConfig cfg;
  cfg.n_per_level = 200;
  std::vector<double> offsets;
  for (int k = 0; k < 40; ++k) offsets.push_back(-0.1 * k);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = subset_simulation_multi(linear_g(1.0), 2, offsets, cfg, seed);
    for (std::size_t k = 1; k < r.size(); ++k) CHECK(r[k].p_f <= r[k - 1].p_f);
    CHECK(r.back().p_f > 0.0);
  }
  CHECK(subset_simulation_multi(linear_g(1.0), 2, {}, cfg, 1).empty());
}
