#include "doctest.h"

#include "hbm/reliability.hpp"

#include <algorithm>
#include <cmath>

using namespace hbm;
using namespace hbm::reliability;

namespace {

SampleSet hyper_rows(const std::vector<Vector>& rows) {
  SampleSet s;
  s.draws.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) s.draws.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  s.log_likelihoods = Vector::Zero(s.draws.rows());
  return s;
}

Vector psi(double mu, double sigma) {
  Vector v(8);
  v << Vector::Constant(3, mu), Vector::Constant(3, sigma), 0.02, 0.001;
  return v;
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(q * (v.size() - 1))];
}

double crude_exceedance(const std::vector<double>& peaks, double d0) {
  return static_cast<double>(std::count_if(peaks.begin(), peaks.end(), [&](double p) { return p >= d0; })) /
         static_cast<double>(peaks.size());
}

}  // namespace

TEST_CASE("theta distributions") {
  const ThetaDistribution d = ThetaDistribution::diagonal(Vector::Ones(3), Vector::Constant(3, 0.05));
  CHECK(d.chol(1, 1) == 0.05);
  CHECK(d.chol(1, 0) == 0.0);
  CHECK_THROWS(ThetaDistribution::diagonal(Vector::Ones(3), Vector::Constant(3, -0.05)));
  Rng rng = split_stream(1, 0);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix draws(20000, 2);
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    const double a = n(rng), b = n(rng);
    draws(i, 0) = 1.0 + 0.1 * a;
    draws(i, 1) = 2.0 + 0.05 * a + 0.05 * b;
  }
  const ThetaDistribution m = ThetaDistribution::moment_matched(draws);
  Matrix cov(2, 2);
  cov << 0.01, 0.005, 0.005, 0.005;
  CHECK((m.chol * m.chol.transpose() - cov).cwiseAbs().maxCoeff() < 5e-4);
  CHECK(std::abs(m.mean(0) - 1.0) < 0.01);
}

TEST_CASE("mean-hyper distribution averages the hyper columns") {
  const SampleSet h = hyper_rows({psi(1.0, 0.04), psi(1.02, 0.06)});
  const ThetaDistribution d = mean_hyper_distribution(h, 3);
  CHECK(d.mean(0) == doctest::Approx(1.01));
  CHECK(d.chol(2, 2) == doctest::Approx(0.05));
}

TEST_CASE("limit state and input validation") {
  CHECK_THROWS(DisplacementLimitState{0.0}.validate());
  UncertainInput in;
  CHECK_THROWS(in.excitation(Vector::Zero(10)));
  CHECK(in.excitation(Vector::Ones(1000)).phi.size() == 1000);
}

TEST_CASE("median threshold gives a failure probability near one half") {
  ReliabilitySetup setup;
  const ThetaDistribution theta = ThetaDistribution::diagonal(Vector::Ones(3), Vector::Constant(3, 0.05));
  const std::vector<double> peaks = predictive_peaks(setup, theta, 1000, 4);
  const double median = quantile(peaks, 0.5);
  const PeakResponse response(setup, theta);
  const SubsetResult r = failure_probability(response, {median}, {}, 8);
  CHECK(r.p_f >= 0.4);
  CHECK(r.p_f <= 0.6);
}

TEST_CASE("unreachable threshold falls below the smallest resolvable level") {
  ReliabilitySetup setup;
  const ThetaDistribution theta = ThetaDistribution::diagonal(Vector::Ones(3), Vector::Constant(3, 0.05));
  // static bound for a unit force at the top, amplified far beyond any dynamic response
  Vector f = Vector::Zero(3);
  f(2) = 1.0;
  const double bound = setup.model.stiffness().ldlt().solve(f).maxCoeff() * 1000.0;
  const PeakResponse response(setup, theta);
  SubsetSimConfig cfg;
  cfg.max_levels = 4;
  const SubsetResult r = failure_probability(response, {bound}, cfg, 2);
  CHECK(r.censored);
  CHECK(r.p_f < std::pow(cfg.p0, cfg.max_levels));
}

TEST_CASE("fixed theta agrees with crude Monte Carlo near 1e-2") {
  ReliabilitySetup setup;
  const ThetaDistribution point = ThetaDistribution::point(Vector::Ones(3));
  const std::vector<double> peaks = predictive_peaks(setup, point, 10000, 21);
  const double d0 = quantile(peaks, 0.99);
  const double p_mc = crude_exceedance(peaks, d0);
  const FailureCurve c = failure_curve(setup, point, {d0}, {}, 3, "point");
  const double se_mc = std::sqrt(p_mc * (1 - p_mc) / 1e4);
  const double se_ss = 0.25 * c.p_f[0];
  CHECK(std::abs(c.p_f[0] - p_mc) <= 4.0 * std::hypot(se_mc, se_ss));
}

TEST_CASE("curves are monotone and flag clamping") {
  ReliabilitySetup setup;
  const SampleSet h = hyper_rows({psi(1.0, 0.05)});
  const ThetaDistribution theta = mean_hyper_distribution(h, 3);
  const std::vector<double> peaks = predictive_peaks(setup, theta, 500, 4);
  const std::vector<double> grid{quantile(peaks, 0.5), quantile(peaks, 0.8), quantile(peaks, 0.95)};
  const FailureCurve c = failure_prob_mean_hyper(h, 3, setup, grid, {}, 5);
  CHECK(c.method == "hbm_mean");
  CHECK(c.monotone_non_increasing());
  CHECK(c.clamp_events == 0);

  const ThetaDistribution wide = ThetaDistribution::diagonal(Vector::Ones(3), Vector::Constant(3, 1.5));
  const FailureCurve w = failure_curve(setup, wide, {grid[0]}, {}, 5, "wide");
  CHECK(w.clamp_events > 0);
  CHECK(std::isfinite(w.p_f[0]));
}

TEST_CASE("full-hyper average") {
  ReliabilitySetup setup;
  const SampleSet same = hyper_rows({psi(1.0, 0.05), psi(1.0, 0.05), psi(1.0, 0.05)});
  const std::vector<double> peaks = predictive_peaks(setup, mean_hyper_distribution(same, 3), 1000, 6);
  const std::vector<double> grid{quantile(peaks, 0.9)};
  const FailureCurve mean = failure_prob_mean_hyper(same, 3, setup, grid, {}, 7);
  const FailureCurve full = failure_prob_full_hyper(same, 3, 3, setup, grid, {}, 7);
  CHECK(full.n_hyper == 3);
  CHECK(full.p_f[0] <= 1.6 * mean.p_f[0]);
  CHECK(full.p_f[0] >= mean.p_f[0] / 1.6);

  // M = 1 is a single per-sample evaluation
  const SampleSet single = hyper_rows({psi(1.0, 0.05)});
  const FailureCurve one = failure_prob_full_hyper(single, 3, 1, setup, grid, {}, 9);
  const PeakResponse response(setup, ThetaDistribution::diagonal(Vector::Ones(3), Vector::Constant(3, 0.05)));
  CHECK(one.p_f[0] == failure_probability(response, {grid[0]}, {}, derive_seed(derive_seed(9, 1), 0)).p_f);

  CHECK_THROWS(failure_prob_full_hyper(single, 3, 2, setup, grid, {}, 9));
  CHECK_THROWS(failure_prob_full_hyper(single, 3, 0, setup, grid, {}, 9));
}

TEST_CASE("two-point hyper set averages the per-sample probabilities") {
  ReliabilitySetup setup;
  const Vector a = psi(1.0, 0.02), b = psi(0.85, 0.02);
  const SampleSet pair = hyper_rows({a, b});
  const std::vector<double> peaks_a = predictive_peaks(setup, mean_hyper_distribution(hyper_rows({a}), 3), 10000, 31);
  const std::vector<double> peaks_b = predictive_peaks(setup, mean_hyper_distribution(hyper_rows({b}), 3), 10000, 32);
  const double d0 = quantile(peaks_a, 0.99);
  const double pa = crude_exceedance(peaks_a, d0), pb = crude_exceedance(peaks_b, d0);
  const FailureCurve full = failure_prob_full_hyper(pair, 3, 2, setup, {d0}, {}, 11);
  const double expected = 0.5 * (pa + pb);
  CHECK(pb > pa);
  CHECK(full.p_f[0] == doctest::Approx(expected).epsilon(0.3));
}

TEST_CASE("predictive peaks share input realisations") {
  ReliabilitySetup setup;
  const ThetaDistribution point = ThetaDistribution::point(Vector::Ones(3));
  const ThetaDistribution spread = ThetaDistribution::diagonal(Vector::Ones(3), Vector::Constant(3, 0.05));
  const std::vector<double> a = predictive_peaks(setup, point, 300, 2);
  const std::vector<double> b = predictive_peaks(setup, point, 300, 2);
  CHECK(a == b);
  const std::vector<double> c = predictive_peaks(setup, spread, 300, 2);
  auto sd = [](const std::vector<double>& v) {
    const Eigen::Map<const Vector> m(v.data(), static_cast<Eigen::Index>(v.size()));
    return std::sqrt((m.array() - m.mean()).square().mean());
  };
  CHECK(sd(a) < sd(c));
}

TEST_CASE("threshold grid spans the median to the rare tail") {
  ReliabilitySetup setup;
  const ThetaDistribution theta = ThetaDistribution::diagonal(Vector::Ones(3), Vector::Constant(3, 0.05));
  const std::vector<double> grid = d0_grid(setup, theta, 20, 1e-5, 1000, {}, 3);
  REQUIRE(grid.size() == 20);
  for (std::size_t j = 1; j < grid.size(); ++j) CHECK(grid[j] > grid[j - 1]);
  const PeakResponse response(setup, theta);
  const double p_top = failure_probability(response, {grid.back()}, {}, 77).p_f;
  CHECK(p_top > 1e-6);
  CHECK(p_top < 1e-4);
}

TEST_CASE("hyper-mixture predictive draws") {
  ReliabilitySetup setup;
  const SampleSet single = hyper_rows({psi(1.0, 0.05)});
  const ThetaDistribution same = ThetaDistribution::diagonal(Vector::Ones(3), Vector::Constant(3, 0.05));
  CHECK(predictive_peaks_hyper(setup, single, 3, 200, 8) == predictive_peaks(setup, same, 200, 8));

  // rows that differ only in mu shift the mixture between the two components
  const SampleSet pair = hyper_rows({psi(1.0, 0.001), psi(0.7, 0.001)});
  const std::vector<double> mix = predictive_peaks_hyper(setup, pair, 3, 400, 8);
  const std::vector<double> stiff = predictive_peaks(setup, ThetaDistribution::point(Vector::Ones(3)), 400, 8);
  const std::vector<double> soft = predictive_peaks(setup, ThetaDistribution::point(Vector::Constant(3, 0.7)), 400, 8);
  int from_stiff = 0, from_soft = 0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    const double ds = std::abs(mix[i] - stiff[i]), dw = std::abs(mix[i] - soft[i]);
    (ds < dw ? from_stiff : from_soft) += 1;
  }
  CHECK(from_stiff + from_soft == 400);
  CHECK(from_stiff > 140);
  CHECK(from_soft > 140);
}

TEST_CASE("noisy curves stay monotone") {
  ReliabilitySetup setup;
  SubsetSimConfig cfg;
  cfg.n_per_level = 100;
  const ThetaDistribution theta = ThetaDistribution::diagonal(Vector::Ones(3), Vector::Constant(3, 0.05));
  const std::vector<double> peaks = predictive_peaks(setup, theta, 300, 3);
  std::vector<double> grid;
  for (int j = 0; j < 15; ++j) grid.push_back(quantile(peaks, 0.5) * (1.0 + 0.05 * j));
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    CHECK(failure_curve(setup, theta, grid, cfg, seed, "x").monotone_non_increasing());
    CHECK(failure_prob_full_hyper(hyper_rows({psi(1.0, 0.05), psi(0.95, 0.03)}), 3, 2, setup, grid, cfg, seed)
              .monotone_non_increasing());
  }
}
