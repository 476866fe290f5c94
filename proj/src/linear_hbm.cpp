#include "hbm/linear_hbm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

namespace hbm::linear {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Matrix information_factor(const LinearModel& model, double multiplicity, Eigen::LLT<Matrix>& llt) {
  const Matrix info = multiplicity * model.A * model.A.transpose();
  llt.compute(info);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-14) {
    throw std::domain_error("A A^T is rank-deficient: A needs full row rank (" +
                            std::to_string(model.n_theta()) + " independent rows)");
  }
  return info;
}

}  // namespace

void LinearModel::validate() const {
  if (A.rows() < 1 || A.cols() < 1) throw std::invalid_argument("LinearModel: empty A");
  if (!(sigma_noise > 0.0)) throw std::invalid_argument("LinearModel: sigma_noise must be > 0");
}

Vector HyperBox::lower(Eigen::Index n_theta) const {
  Vector v(2 * n_theta);
  v << Vector::Constant(n_theta, mu_lo), Vector::Constant(n_theta, sigma_lo);
  return v;
}

Vector HyperBox::upper(Eigen::Index n_theta) const {
  Vector v(2 * n_theta);
  v << Vector::Constant(n_theta, mu_hi), Vector::Constant(n_theta, sigma_hi);
  return v;
}

bool HyperBox::contains(const HyperParams& hp) const {
  return (hp.mu.array() >= mu_lo).all() && (hp.mu.array() <= mu_hi).all() &&
         (hp.sigma.array() >= sigma_lo).all() && (hp.sigma.array() <= sigma_hi).all();
}

GaussianSummary reduce_dataset(const LinearModel& model, const Vector& y) {
  model.validate();
  if (y.size() != model.n_data()) {
    throw std::invalid_argument("reduce_dataset: y has length " + std::to_string(y.size()) + ", expected " +
                                std::to_string(model.n_data()));
  }
  Eigen::LLT<Matrix> llt;
  information_factor(model, 1.0, llt);
  const double s2 = model.sigma_noise * model.sigma_noise;
  GaussianSummary out;
  out.sigma_star = s2 * llt.solve(Matrix::Identity(model.n_theta(), model.n_theta()));
  out.sigma_star = 0.5 * (out.sigma_star + out.sigma_star.transpose());
  out.theta_star = llt.solve(model.A * y);
  return out;
}

GaussianSummary cbm_posterior(const LinearModel& model, std::span<const Vector> datasets) {
  model.validate();
  if (datasets.empty()) throw std::invalid_argument("cbm_posterior: no datasets");
  Vector y_sum = Vector::Zero(model.n_data());
  for (const auto& y : datasets) {
    if (y.size() != model.n_data()) throw std::invalid_argument("cbm_posterior: dataset length mismatch");
    y_sum += y;
  }
  const auto n = static_cast<double>(datasets.size());
  Eigen::LLT<Matrix> llt;
  information_factor(model, n, llt);
  const double s2 = model.sigma_noise * model.sigma_noise;
  GaussianSummary out;
  out.sigma_star = s2 * llt.solve(Matrix::Identity(model.n_theta(), model.n_theta()));
  out.sigma_star = 0.5 * (out.sigma_star + out.sigma_star.transpose());
  out.theta_star = llt.solve(model.A * y_sum);
  return out;
}

HyperPosterior::HyperPosterior(std::vector<GaussianSummary> summaries, HyperBox prior)
    : summaries_(std::move(summaries)), prior_(prior) {
  if (summaries_.empty()) throw std::invalid_argument("HyperPosterior: need at least one summary");
  n_theta_ = summaries_.front().theta_star.size();
  shared_cov_ = true;
  for (const auto& s : summaries_) {
    if (s.theta_star.size() != n_theta_ || s.sigma_star.rows() != n_theta_) {
      throw std::invalid_argument("HyperPosterior: inconsistent summary dimensions");
    }
    if (s.sigma_star != summaries_.front().sigma_star) shared_cov_ = false;
  }
  if (shared_cov_) {
    mean_star_ = Vector::Zero(n_theta_);
    for (const auto& s : summaries_) mean_star_ += s.theta_star;
    mean_star_ /= static_cast<double>(summaries_.size());
    scatter_ = Matrix::Zero(n_theta_, n_theta_);
    for (const auto& s : summaries_) {
      const Vector r = s.theta_star - mean_star_;
      scatter_ += r * r.transpose();
    }
  }
}

double HyperPosterior::log_likelihood(const HyperParams& hp) const {
  if (hp.mu.size() != n_theta_) throw std::invalid_argument("HyperPosterior: dimension mismatch");
  const Matrix pop_cov = hp.covariance();
  if (!shared_cov_) {
    const GaussianNd population(hp.mu, pop_cov);
    double total = 0.0;
    for (const auto& s : summaries_) {
      total += convolve_marginal(population, s.as_gaussian()).logpdf(hp.mu);
    }
    return total;
  }

  // Shared C = diag(sigma^2) + Sigma*: sum_i (mu - t_i)^T C^-1 (mu - t_i)
  //   = N (mu - t_bar)^T C^-1 (mu - t_bar) + tr(C^-1 S).
  const Matrix c = pop_cov + summaries_.front().sigma_star;
  const Matrix l = cholesky_lower(c);
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const auto n = static_cast<double>(summaries_.size());
  const Vector z = l.triangularView<Eigen::Lower>().solve(hp.mu - mean_star_);
  const Matrix w = l.triangularView<Eigen::Lower>().solve(scatter_);
  const Matrix v = l.triangularView<Eigen::Lower>().solve(w.transpose());
  const double quad = n * z.squaredNorm() + v.trace();
  return -0.5 * n * (static_cast<double>(n_theta_) * kLog2Pi + log_det) - 0.5 * quad;
}

double HyperPosterior::operator()(const HyperParams& hp) const {
  if (!prior_.contains(hp)) return kNegInf;
  const double log_prior = -static_cast<double>(n_theta_) *
                           (std::log(prior_.mu_hi - prior_.mu_lo) + std::log(prior_.sigma_hi - prior_.sigma_lo));
  return log_prior + log_likelihood(hp);
}

double HyperPosterior::log_density(const Vector& psi) const { return (*this)(unpack_hyper(psi)); }

double hyper_log_posterior(const HyperParams& hp, const std::vector<GaussianSummary>& summaries,
                           const HyperBox& prior) {
  return HyperPosterior(summaries, prior)(hp);
}

HyperParams unpack_hyper(const Vector& psi) {
  if (psi.size() % 2 != 0) throw std::invalid_argument("unpack_hyper: odd length");
  const Eigen::Index n = psi.size() / 2;
  return HyperParams(psi.head(n), psi.tail(n));
}

Vector pack_hyper(const HyperParams& hp) {
  Vector psi(2 * hp.mu.size());
  psi << hp.mu, hp.sigma;
  return psi;
}

SampleSet sample_hyper_posterior(const std::vector<GaussianSummary>& summaries, const HyperBox& prior,
                                 const TmcmcConfig& cfg, std::uint64_t seed) {
  auto posterior = std::make_shared<HyperPosterior>(summaries, prior);
  const Eigen::Index n = posterior->n_theta();
  auto target = uniform_box_target(prior.lower(n), prior.upper(n), [posterior](const Vector& psi) {
    return posterior->log_likelihood(unpack_hyper(psi));
  });
  return tmcmc(target, cfg, seed);
}

double reliability_index(const Vector& mean, const Matrix& cov, const LinearLimitState& ls,
                         const LinearModel& model) {
  if (ls.c.size() != model.n_data()) throw std::invalid_argument("reliability_index: c has wrong length");
  if ((ls.c.array() == 0.0).all()) throw std::invalid_argument("reliability_index: c is all zero");
  const Vector w = model.A * ls.c;
  const double var = w.dot(cov * w);
  if (!(var > 0.0)) throw std::domain_error("reliability_index: covariance is singular along A c");
  return (ls.b - w.dot(mean)) / std::sqrt(var);
}

double reliability_index(const HyperParams& hp, const LinearLimitState& ls, const LinearModel& model) {
  return reliability_index(hp.mu, hp.covariance(), ls, model);
}

std::vector<double> failure_curve_linear(const SampleSet& hyper_samples, const Vector& c,
                                         std::span<const double> thresholds, const LinearModel& model) {
  if (hyper_samples.size() < 1) throw std::invalid_argument("failure_curve_linear: no hyper samples");
  const Eigen::Index n = model.n_theta();
  if (hyper_samples.dim() != 2 * n) throw std::invalid_argument("failure_curve_linear: bad sample dimension");
  const Vector w = model.A * c;
  const Vector w2 = w.array().square();

  std::vector<double> out(thresholds.size(), 0.0);
  for (Eigen::Index m = 0; m < hyper_samples.size(); ++m) {
    const auto row = hyper_samples.draws.row(m);
    const double centre = row.head(n).dot(w);
    const double var = row.tail(n).array().square().matrix().dot(w2);
    if (!(var > 0.0)) throw std::domain_error("failure_curve_linear: singular hyper sample");
    const double sd = std::sqrt(var);
    for (std::size_t j = 0; j < thresholds.size(); ++j) {
      out[j] += std_normal_cdf(-(thresholds[j] - centre) / sd);
    }
  }
  for (auto& p : out) p /= static_cast<double>(hyper_samples.size());
  return out;
}

double failure_probability_linear(const SampleSet& hyper_samples, const LinearLimitState& ls,
                                  const LinearModel& model) {
  if (ls.c.size() != model.n_data()) throw std::invalid_argument("failure_probability_linear: bad c");
  const double b[] = {ls.b};
  return failure_curve_linear(hyper_samples, ls.c, b, model).front();
}

std::vector<double> failure_curve_gaussian(const GaussianSummary& posterior, const Vector& c,
                                           std::span<const double> thresholds, const LinearModel& model) {
  std::vector<double> out;
  out.reserve(thresholds.size());
  for (double b : thresholds) {
    out.push_back(std_normal_cdf(-reliability_index(posterior.theta_star, posterior.sigma_star, {b, c}, model)));
  }
  return out;
}

std::vector<double> threshold_grid(const SampleSet& hyper_samples, const Vector& c, const LinearModel& model,
                                   int n_points, double p_hi, double p_lo) {
  if (n_points < 2) throw std::invalid_argument("threshold_grid: need >= 2 points");
  const Eigen::Index n = model.n_theta();
  const Vector mean = hyper_samples.mean();
  const HyperParams mean_hp(mean.head(n), mean.tail(n));
  const Vector w = model.A * c;
  const double centre = w.dot(mean_hp.mu);
  const double sd = std::sqrt(w.dot(mean_hp.covariance() * w));

  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(n_points));
  const double log_hi = std::log(p_hi);
  const double log_lo = std::log(p_lo);
  for (int j = 0; j < n_points; ++j) {
    const double p = std::exp(log_hi + (log_lo - log_hi) * j / (n_points - 1));
    grid.push_back(centre + sd * std_normal_quantile(1.0 - p));
  }
  return grid;
}

double threshold_at_probability(const SampleSet& hyper_samples, const Vector& c, const LinearModel& model,
                                double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("threshold_at_probability: p must lie in (0, 1)");
  auto pf = [&](double b) {
    const double bs[] = {b};
    return failure_curve_linear(hyper_samples, c, bs, model).front();
  };
  const auto grid = threshold_grid(hyper_samples, c, model, 2, 0.5, p);
  double lo = grid[0];
  double hi = grid[1];
  const double step = std::max(hi - lo, 1e-12);
  while (pf(lo) < p) lo -= step;
  while (pf(hi) > p) hi += step;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (pf(mid) > p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Matrix random_design(Eigen::Index n_theta, Eigen::Index n_data, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix a(n_theta, n_data);
  // Column-major fill by data point so nested designs share leading columns.
  for (Eigen::Index j = 0; j < n_data; ++j)
    for (Eigen::Index k = 0; k < n_theta; ++k) a(k, j) = u(rng);
  return a;
}

SimulatedLinear simulate_datasets(const LinearModel& model, const HyperParams& generation, int n_datasets,
                                  std::uint64_t seed) {
  model.validate();
  if (n_datasets < 1) throw std::invalid_argument("simulate_datasets: n_datasets must be >= 1");
  if (generation.mu.size() != model.n_theta()) throw std::invalid_argument("simulate_datasets: dimension mismatch");
  SimulatedLinear out;
  out.datasets.resize(static_cast<std::size_t>(n_datasets));
  out.truth.resize(static_cast<std::size_t>(n_datasets));
  for (int i = 0; i < n_datasets; ++i) {
    Rng rng = split_stream(seed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector theta(model.n_theta());
    for (Eigen::Index k = 0; k < theta.size(); ++k) theta(k) = generation.mu(k) + generation.sigma(k) * normal(rng);
    Vector y = model.A.transpose() * theta;
    for (Eigen::Index j = 0; j < y.size(); ++j) y(j) += model.sigma_noise * normal(rng);
    out.truth[static_cast<std::size_t>(i)] = std::move(theta);
    out.datasets[static_cast<std::size_t>(i)] = std::move(y);
  }
  return out;
}

}  // namespace hbm::linear
