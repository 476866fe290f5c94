#include "doctest.h"
#include "oracles.hpp"

#include "hbm/two_stage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

using namespace hbm;
using namespace hbm::two_stage;

namespace {

ForwardSetup nominal_setup(std::uint64_t seed = 1) {
  ForwardSetup s;
  Rng rng = split_stream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  s.excitation.phi.resize(1000);
  for (auto& v : s.excitation.phi) v = normal(rng);
  return s;
}

Matrix clean_response(const ForwardSetup& s, const Vector& theta) {
  dynamics::ShearModel m = s.model;
  m.theta = theta;
  return dynamics::integrate_accelerations(m, s.excitation);
}

StageOneResult atoms_from(const Matrix& draws) {
  StageOneResult r;
  r.samples.draws = draws;
  r.samples.log_likelihoods = Vector::Zero(draws.rows());
  return r;
}

Matrix gaussian_atoms(Rng& rng, int n, const Vector& mean, const Vector& sd) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(n, mean.size());
  for (int i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < mean.size(); ++k) a(i, k) = mean(k) + sd(k) * normal(rng);
  return a;
}

DynamicHyperParams hyper(double mu, double s, double mu_sig, double s_sig) {
  return {Vector::Constant(3, mu), Vector::Constant(3, s), mu_sig, s_sig};
}

}  // namespace

TEST_CASE("pack and unpack round-trip") {
  DynamicParams p{Vector::Constant(3, 1.1), 0.03};
  const DynamicParams q = DynamicParams::unpack(p.pack());
  CHECK(q.theta == p.theta);
  CHECK(q.sigma_pred == p.sigma_pred);
  const DynamicHyperParams h = hyper(1.0, 0.05, 0.02, 0.001);
  const DynamicHyperParams g = DynamicHyperParams::unpack(h.pack());
  CHECK(g.pack() == h.pack());
  CHECK_THROWS(DynamicHyperParams::unpack(Vector::Ones(5)));
  CHECK_THROWS(hyper(1.0, -0.05, 0.02, 0.001).validate());
}

TEST_CASE("likelihood at a zero-residual dataset") {
  const ForwardSetup s = nominal_setup();
  const Matrix y = clean_response(s, Vector::Ones(3));
  const double sigma = 0.02;
  const Vector rms = dynamics::channel_rms(y);
  double expected = 0.0;
  for (int c = 0; c < 3; ++c) expected -= 1000.0 * std::log(sigma * rms(c) * std::sqrt(2.0 * std::numbers::pi));
  const double ll = log_likelihood_dynamic({Vector::Ones(3), sigma}, y, s);
  CHECK(ll == doctest::Approx(expected).epsilon(1e-12));
  for (int k = 0; k < 3; ++k) {
    Vector th = Vector::Ones(3);
    th(k) = 1.1;
    CHECK(log_likelihood_dynamic({th, sigma}, y, s) < ll);
  }
  CHECK_THROWS(log_likelihood_dynamic({Vector::Ones(3), 0.0}, y, s));
  CHECK_THROWS(log_likelihood_dynamic({Vector::Ones(3), sigma}, y.leftCols(10), s));
}

TEST_CASE("maximum-likelihood prediction error on 2% noise") {
  const ForwardSetup s = nominal_setup();
  const auto data = dynamics::generate_datasets(HyperParams(Vector::Ones(3), Vector::Constant(3, 0.05)), 1,
                                                s.excitation, 0.02, 33);
  const Matrix pred = clean_response(s, data[0].truth);
  const Vector rms = dynamics::channel_rms(pred);
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) acc += ((data[0].accelerations.row(c) - pred.row(c)) / rms(c)).squaredNorm();
  const double sigma_hat = std::sqrt(acc / 3000.0);
  CHECK(sigma_hat >= 0.018);
  CHECK(sigma_hat <= 0.022);
  // the likelihood in sigma peaks there
  const DynamicParams at{data[0].truth, sigma_hat};
  const double ll = log_likelihood_dynamic(at, data[0].accelerations, s);
  CHECK(ll > log_likelihood_dynamic({data[0].truth, sigma_hat * 1.01}, data[0].accelerations, s));
  CHECK(ll > log_likelihood_dynamic({data[0].truth, sigma_hat * 0.99}, data[0].accelerations, s));
}

TEST_CASE("stage one recovers the generating parameters") {
  const ForwardSetup s = nominal_setup();
  const auto data = dynamics::generate_datasets(HyperParams(Vector::Ones(3), Vector::Constant(3, 0.05)), 1,
                                                s.excitation, 0.02, 34);
  TmcmcConfig cfg;
  cfg.n_samples = 1000;
  cfg.chain_length_per_sample = 3;
  const StageOneResult r = stage_one(data[0].accelerations, s, StageOnePrior{}, cfg, 5, 7);
  CHECK(r.dataset_id == 7);
  const Vector mean = r.samples.mean();
  for (int k = 0; k < 3; ++k) CHECK(std::abs(mean(k) - data[0].truth(k)) <= 0.02);
  CHECK(mean(3) >= 0.018);
  CHECK(mean(3) <= 0.022);

  const StageOneResult again = stage_one(data[0].accelerations, s, StageOnePrior{}, cfg, 5, 7);
  CHECK(again.samples.draws == r.samples.draws);
}

TEST_CASE("stage one on a noise-free dataset") {
  const ForwardSetup s = nominal_setup();
  const Matrix y = clean_response(s, Vector::Ones(3));
  TmcmcConfig cfg;
  cfg.n_samples = 500;
  cfg.chain_length_per_sample = 3;
  const StageOneResult r = stage_one(y, s, StageOnePrior{}, cfg, 6);
  const Vector mean = r.samples.mean();
  for (int k = 0; k < 3; ++k) CHECK(std::abs(mean(k) - 1.0) <= 0.005);
  CHECK(mean(3) < 0.005);

  // grid scan over theta_1 at the other true values peaks at 1
  double best = -1e300, arg = 0.0;
  for (double t = 0.99; t <= 1.01 + 1e-12; t += 0.0005) {
    Vector th = Vector::Ones(3);
    th(0) = t;
    const double v = log_likelihood_dynamic({th, 0.001}, y, s);
    if (v > best) best = v, arg = t;
  }
  CHECK(arg == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("single-atom mixtures reduce to a product of densities") {
  Rng rng = split_stream(3, 0);
  std::vector<StageOneResult> stage1;
  Vector sd(4);
  sd << 0.05, 0.05, 0.05, 0.002;
  Vector mean(4);
  mean << 1.0, 1.0, 1.0, 0.02;
  for (int i = 0; i < 4; ++i) stage1.push_back(atoms_from(gaussian_atoms(rng, 1, mean, sd)));
  const McHyperPosterior post(stage1, DynamicHyperBox{});
  const DynamicHyperParams hp = hyper(0.98, 0.06, 0.021, 0.003);
  double expected = 0.0;
  for (const auto& r : stage1) {
    for (int k = 0; k < 3; ++k) expected += oracle::normal_logpdf(r.samples.draws(0, k), 0.98, 0.06);
    expected += oracle::normal_logpdf(r.samples.draws(0, 3), 0.021, 0.003) - std::log(oracle::normal_cdf(0.021 / 0.003));
  }
  CHECK(post.log_likelihood(hp.pack()) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(hyper_log_posterior_mc(hp, stage1, DynamicHyperBox{}) == post(hp));
  CHECK(post.log_density(hyper(2.0, 0.05, 0.02, 0.001).pack()) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("mixture density is permutation invariant") {
  Rng rng = split_stream(4, 0);
  Vector sd = Vector::Constant(4, 0.01);
  std::vector<StageOneResult> stage1;
  for (int i = 0; i < 3; ++i) {
    Vector m(4);
    m << 1.0 + 0.03 * i, 0.97, 1.02, 0.02;
    stage1.push_back(atoms_from(gaussian_atoms(rng, 200, m, sd)));
  }
  auto shuffled = stage1;
  std::reverse(shuffled.begin(), shuffled.end());
  for (auto& r : shuffled) r.samples.draws = r.samples.draws.colwise().reverse().eval();
  const DynamicHyperParams hp = hyper(1.0, 0.04, 0.02, 0.005);
  const double a = McHyperPosterior(stage1, DynamicHyperBox{}).log_likelihood(hp.pack());
  const double b = McHyperPosterior(shuffled, DynamicHyperBox{}).log_likelihood(hp.pack());
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("mixture density peaks at the generating population mean") {
  Rng rng = split_stream(5, 0);
  Vector mean(4), sd(4);
  mean << 1.03, 0.97, 1.0, 0.02;
  sd << 0.05, 0.05, 0.05, 0.002;
  std::vector<StageOneResult> stage1;
  for (int i = 0; i < 3; ++i) stage1.push_back(atoms_from(gaussian_atoms(rng, 10000, mean, sd)));
  const McHyperPosterior post(stage1, DynamicHyperBox{});
  const double cell = 0.005;
  double best = -1e300, arg = 0.0;
  for (double mu = 0.9; mu <= 1.1 + 1e-12; mu += cell) {
    DynamicHyperParams hp{mean.head(3), sd.head(3), mean(3), sd(3)};
    hp.mu_theta(0) = mu;
    const double v = post(hp);
    if (v > best) best = v, arg = mu;
  }
  CHECK(std::abs(arg - mean(0)) <= cell);
}

TEST_CASE("mixture input validation") {
  CHECK_THROWS(McHyperPosterior({}, DynamicHyperBox{}));
  std::vector<StageOneResult> stage1{atoms_from(Matrix::Ones(3, 4))};
  CHECK_THROWS(McHyperPosterior(stage1, DynamicHyperBox{}, 0));
  const McHyperPosterior post(stage1, DynamicHyperBox{});
  CHECK_THROWS(post.log_likelihood(hyper(1.0, -0.1, 0.02, 0.001).pack()));
  CHECK_THROWS(stage_two(stage1, DynamicHyperBox{}, TmcmcConfig{}, 1));
}

TEST_CASE("identical point-mass stage-one results") {
  Vector atom(4);
  atom << 1.05, 0.95, 1.0, 0.02;
  const Matrix draws = atom.transpose().replicate(50, 1);
  const std::vector<StageOneResult> stage1{atoms_from(draws), atoms_from(draws)};
  const McHyperPosterior post(stage1, DynamicHyperBox{});
  auto at = [&](double dmu, double s) {
    DynamicHyperParams hp{atom.head(3) + Vector::Constant(3, dmu), Vector::Constant(3, s), 0.02, 0.001};
    return post(hp);
  };
  // density grows as sigma_theta shrinks and peaks at the common value
  double prev = -std::numeric_limits<double>::infinity();
  for (double s : {0.3, 0.1, 0.03, 0.01, 0.003, 0.001}) {
    CHECK(at(0.0, s) > prev);
    prev = at(0.0, s);
    for (double dmu : {-0.02, -0.005, 0.005, 0.02}) CHECK(at(dmu, s) < at(0.0, s));
  }

  TmcmcConfig cfg;
  cfg.n_samples = 1000;
  const SampleSet s = stage_two(stage1, DynamicHyperBox{}, cfg, 9);
  CHECK(s.draws.allFinite());
  CHECK(s.draws.leftCols(3).minCoeff() >= DynamicHyperBox{}.mu_theta_lo);
  CHECK(s.draws.middleCols(3, 3).maxCoeff() <= DynamicHyperBox{}.sigma_theta_hi);
  Eigen::Index best;
  s.log_likelihoods.maxCoeff(&best);
  CHECK(s.draws.row(best).segment(3, 3).minCoeff() < 0.01);
}

TEST_CASE("classical pooled posterior") {
  const ForwardSetup s = nominal_setup();
  const auto data = dynamics::generate_datasets(HyperParams(Vector::Ones(3), Vector::Constant(3, 0.05)), 100,
                                                s.excitation, 0.02, 35);
  std::vector<Matrix> ys;
  for (const auto& d : data) ys.push_back(d.accelerations);
  TmcmcConfig cfg;
  cfg.n_samples = 1000;
  cfg.chain_length_per_sample = 3;

  const SampleSet one = cbm_dynamic({ys[0]}, s, StageOnePrior{}, cfg, 2);
  const StageOneResult direct = stage_one(ys[0], s, StageOnePrior{}, cfg, 2);
  CHECK(one.draws == direct.samples.draws);

  const SampleSet pooled = cbm_dynamic(ys, s, StageOnePrior{}, cfg, 3);
  const Vector sd = pooled.stddev();
  const Vector mean = pooled.mean();
  for (int k = 0; k < 3; ++k) {
    CHECK(sd(k) < 0.005);
    CHECK(std::abs(mean(k) - 1.0) <= 0.02);
  }
  CHECK_THROWS(cbm_dynamic({}, s, StageOnePrior{}, cfg, 1));
}
