#include "doctest.h"

#include "hbm/gauss.hpp"
#include "hbm/random.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>

using namespace hbm;

namespace {

double normal_pdf_1d(double x, double m, double s) {
  const double z = (x - m) / s;
  return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * std::numbers::pi));
}

// integral over theta of N(theta | mu, s_pop^2) N(theta | t_star, s_star^2)
double marginal_by_quadrature(double mu, double s_pop, double t_star, double s_star) {
  auto f = [&](double th) { return normal_pdf_1d(th, mu, s_pop) * normal_pdf_1d(th, t_star, s_star); };
  const double half = 10.0 * std::max(s_pop, s_star);
  const double c = s_pop < s_star ? mu : t_star;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, c - half, c + half, 10, 1e-11);
}

}  // namespace

TEST_CASE("logpdf closed forms") {
  GaussianNd g1(Vector::Zero(1), Matrix::Identity(1, 1));
  CHECK(g1.logpdf(Vector::Zero(1)) == doctest::Approx(-0.9189385332046727).epsilon(1e-14));

  GaussianNd g2(Vector::Zero(2), Matrix::Identity(2, 2));
  CHECK(g2.logpdf(Vector::Ones(2)) == doctest::Approx(-std::log(2.0 * std::numbers::pi) - 1.0).epsilon(1e-14));
}

TEST_CASE("logpdf of a diagonal Gaussian is a sum of univariate terms") {
  const double s = 0.05;
  GaussianNd g(Vector::Ones(3), Matrix(Vector::Constant(3, s * s).asDiagonal()));
  Vector x(3);
  x << 1.05, 1.0, 0.95;
  double expected = 0.0;
  for (int k = 0; k < 3; ++k) expected += std::log(normal_pdf_1d(x(k), 1.0, s));
  CHECK(g.logpdf(x) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("logpdf rejects bad input") {
  GaussianNd g(Vector::Zero(2), Matrix::Identity(2, 2));
  CHECK_THROWS(g.logpdf(Vector::Zero(3)));
  Vector bad(2);
  bad << 0.0, std::nan("");
  CHECK_THROWS(g.logpdf(bad));
}

TEST_CASE("mode is at the mean") {
  Matrix cov(2, 2);
  cov << 2.0, 0.3, 0.3, 0.5;
  Vector mean(2);
  mean << 1.0, -2.0;
  GaussianNd g(mean, cov);
  Rng rng = split_stream(3, 0);
  const Matrix pts = g.sample(rng, 200);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) CHECK(g.logpdf(mean) >= g.logpdf(pts.row(i).transpose()));
}

TEST_CASE("density integrates to one in 2-D") {
  Matrix cov(2, 2);
  cov << 1.0, 0.4, 0.4, 0.7;
  GaussianNd g(Vector::Zero(2), cov);
  const int n = 400;
  const double lo = -8.0, h = 16.0 / n;
  double total = 0.0;
  Vector x(2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      x << lo + (i + 0.5) * h, lo + (j + 0.5) * h;
      total += std::exp(g.logpdf(x)) * h * h;
    }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("non-symmetric or indefinite covariance is rejected") {
  Matrix asym(2, 2);
  asym << 1.0, 0.5, 0.4, 1.0;
  CHECK_THROWS_WITH(GaussianNd(Vector::Zero(2), asym), doctest::Contains("not symmetric"));
  Matrix indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(GaussianNd(Vector::Zero(2), indef), std::domain_error);
}

TEST_CASE("marginally non-PD covariance succeeds with jitter") {
  Matrix cov(2, 2);
  cov << 1.0, 1.0, 1.0, 1.0;
  CHECK_NOTHROW(GaussianNd(Vector::Zero(2), cov));
}

TEST_CASE("sampling recovers moments") {
  GaussianNd g(Vector::Zero(1), Matrix::Identity(1, 1));
  Rng rng = split_stream(42, 0);
  const Matrix s = g.sample(rng, 100000);
  CHECK(std::abs(s.mean()) < 0.013);

  const double sd = 0.05;
  GaussianNd g3(Vector::Ones(3), Matrix(Vector::Constant(3, sd * sd).asDiagonal()));
  Rng rng3 = split_stream(42, 1);
  const Matrix s3 = g3.sample(rng3, 100000);
  for (int k = 0; k < 3; ++k) {
    const double m = s3.col(k).mean();
    const double std = std::sqrt((s3.col(k).array() - m).square().sum() / (s3.rows() - 1));
    CHECK(std >= 0.0494);
    CHECK(std <= 0.0506);
  }
}

TEST_CASE("sampling is deterministic per seed") {
  GaussianNd g(Vector::Ones(3), Matrix::Identity(3, 3));
  Rng a = split_stream(7, 0), b = split_stream(7, 0);
  CHECK(g.sample(a, 1) == g.sample(b, 1));
  CHECK_THROWS(g.sample(a, 0));
}

TEST_CASE("HyperParams requires positive sigma") {
  CHECK_THROWS(HyperParams(Vector::Ones(2), Vector::Zero(2)));
  HyperParams hp(Vector::Ones(2), Vector::Constant(2, 0.05));
  CHECK(hp.covariance()(0, 0) == doctest::Approx(0.0025));
  CHECK(hp.covariance()(0, 1) == 0.0);
}

TEST_CASE("convolve_marginal adds covariances") {
  GaussianNd prior(Vector::Zero(1), Matrix::Constant(1, 1, 0.05 * 0.05));
  GaussianNd like(Vector::Ones(1), Matrix::Constant(1, 1, 0.03 * 0.03));
  const GaussianNd m = convolve_marginal(prior, like);
  CHECK(m.cov()(0, 0) == doctest::Approx(0.0034).epsilon(1e-14));
  CHECK(m.mean()(0) == 1.0);
  CHECK_THROWS(convolve_marginal(GaussianNd(Vector::Zero(2), Matrix::Identity(2, 2)), like));
}

TEST_CASE("convolve_marginal with a vanishing population equals the likelihood") {
  GaussianNd prior(Vector::Zero(1), Matrix::Constant(1, 1, 1e-12));
  GaussianNd like(Vector::Constant(1, 0.9), Matrix::Constant(1, 1, 0.02 * 0.02));
  const GaussianNd m = convolve_marginal(prior, like);
  for (double mu : {0.85, 0.9, 0.93}) {
    CHECK(m.logpdf(Vector::Constant(1, mu)) == doctest::Approx(like.logpdf(Vector::Constant(1, mu))).epsilon(1e-8));
  }
}

TEST_CASE("convolve_marginal matches quadrature") {
  {
    GaussianNd prior(Vector::Zero(1), Matrix::Constant(1, 1, 0.05 * 0.05));
    GaussianNd like(Vector::Constant(1, 0.9), Matrix::Constant(1, 1, 0.02 * 0.02));
    const double got = std::exp(convolve_marginal(prior, like).logpdf(Vector::Ones(1)));
    CHECK(got == doctest::Approx(marginal_by_quadrature(1.0, 0.05, 0.9, 0.02)).epsilon(1e-6));
  }
  Rng rng = split_stream(11, 0);
  std::uniform_real_distribution<double> sd(0.005, 0.1), loc(0.8, 1.2);
  for (int r = 0; r < 20; ++r) {
    const double s_pop = sd(rng), s_star = sd(rng), t_star = loc(rng), mu = loc(rng);
    GaussianNd prior(Vector::Zero(1), Matrix::Constant(1, 1, s_pop * s_pop));
    GaussianNd like(Vector::Constant(1, t_star), Matrix::Constant(1, 1, s_star * s_star));
    const double got = std::exp(convolve_marginal(prior, like).logpdf(Vector::Constant(1, mu)));
    const double want = marginal_by_quadrature(mu, s_pop, t_star, s_star);
    if (want > 1e-200) CHECK(got == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("convolve_marginal is symmetric in the roles of mu and theta*") {
  Matrix pc(2, 2), lc(2, 2);
  pc << 0.01, 0.0, 0.0, 0.02;
  lc << 0.003, 0.001, 0.001, 0.004;
  Vector a(2), b(2);
  a << 1.0, 0.9;
  b << 1.1, 0.95;
  const GaussianNd m1 = convolve_marginal(GaussianNd(Vector::Zero(2), pc), GaussianNd(a, lc));
  const GaussianNd m2 = convolve_marginal(GaussianNd(Vector::Zero(2), lc), GaussianNd(b, pc));
  CHECK((m1.cov() - m2.cov()).norm() < 1e-15);
  CHECK(m1.logpdf(b) == doctest::Approx(m2.logpdf(a)).epsilon(1e-13));
}

TEST_CASE("standard normal cdf") {
  CHECK(std_normal_cdf(0.0) == 0.5);
  CHECK(std_normal_cdf(-3.0) == doctest::Approx(0.5 * std::erfc(3.0 / std::sqrt(2.0))).epsilon(1e-12));
  CHECK(std_normal_cdf(-3.0) == doctest::Approx(1.349898e-3).epsilon(1e-6));
  for (double x : {0.5, 1.0, 2.0, 4.0}) CHECK(std_normal_cdf(x) + std_normal_cdf(-x) == doctest::Approx(1.0).epsilon(1e-15));
  double prev = 0.0;
  for (double x = -9.0; x <= 9.0; x += 0.01) {
    const double c = std_normal_cdf(x);
    CHECK(c >= prev);
    prev = c;
  }
}

TEST_CASE("log cdf is continuous into the far tail") {
  for (double x : {-3.0, -10.0, -19.9}) CHECK(std_normal_logcdf(x) == doctest::Approx(std::log(std_normal_cdf(x))).epsilon(1e-13));
  // Mills-ratio bounds: phi(x) |x| / (1 + x^2) < Phi(x) < phi(x) / |x| for x < 0
  for (double x : {-20.0, -25.0, -40.0, -100.0}) {
    const double lc = std_normal_logcdf(x);
    CHECK(lc < std_normal_logpdf(x) - std::log(-x));
    CHECK(lc > std_normal_logpdf(x) + std::log(-x / (1.0 + x * x)));
  }
  CHECK(std_normal_logcdf(-20.0) == doctest::Approx(std::log(std_normal_cdf(-20.0))).epsilon(1e-8));
  CHECK(std_normal_logcdf(-19.9999) == doctest::Approx(std_normal_logcdf(-20.0001)).epsilon(1e-4));
  CHECK(std_normal_logcdf(5.0) == doctest::Approx(std::log1p(-std_normal_cdf(-5.0))).epsilon(1e-9));
}

TEST_CASE("quantile inverts cdf") {
  for (double lp = -10.0; lp <= -0.3; lp += 0.1) {
    const double p = std::pow(10.0, lp);
    CHECK(std::abs(std_normal_cdf(std_normal_quantile(p)) - p) <= 1e-12);
    CHECK(std::abs(std_normal_cdf(std_normal_quantile(1.0 - p)) - (1.0 - p)) <= 1e-12);
  }
  CHECK_THROWS_AS(std_normal_quantile(0.0), std::domain_error);
  CHECK_THROWS_AS(std_normal_quantile(1.0), std::domain_error);
  CHECK_THROWS_AS(std_normal_quantile(-0.1), std::domain_error);
}

TEST_CASE("pdf helpers agree") {
  for (double x : {-2.0, 0.0, 1.3}) {
    CHECK(std_normal_pdf(x) == doctest::Approx(normal_pdf_1d(x, 0.0, 1.0)).epsilon(1e-14));
    CHECK(std_normal_logpdf(x) == doctest::Approx(std::log(normal_pdf_1d(x, 0.0, 1.0))).epsilon(1e-14));
  }
}
