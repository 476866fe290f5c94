#include "hbm/samplers.hpp"

#include "hbm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace hbm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string format_vector(const Vector& x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Eigen::Index k = 0; k < x.size(); ++k) os << (k ? ", " : "") << x(k);
  os << ')';
  return os.str();
}

double checked_log_likelihood(const TargetDensity& target, const Vector& x) {
  const double value = target.log_likelihood(x);
  if (std::isnan(value)) {
    throw SamplerError("log-likelihood returned NaN at " + format_vector(x));
  }
  return value;
}

// Weights exp(dbeta * (L - Lmax)); coefficient of variation with population std.
double weight_cov(const Vector& loglik, double lmax, double dbeta) {
  const Vector w = (dbeta * (loglik.array() - lmax)).exp().matrix();
  const double mean = w.mean();
  const double var = (w.array() - mean).square().mean();
  return std::sqrt(var) / mean;
}

double next_increment(const Vector& loglik, double lmax, double remaining, double target_cov) {
  if (weight_cov(loglik, lmax, remaining) <= target_cov) return remaining;
  double lo = 0.0;
  double hi = remaining;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * remaining; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (weight_cov(loglik, lmax, mid) > target_cov) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Matrix proposal_factor(const Matrix& cov) {
  try {
    return cholesky_lower(cov);
  } catch (const std::exception&) {
    // Collapsed population: fall back to the per-axis spread.
    Vector sd = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    const double floor = std::max(1e-12, 1e-8 * sd.maxCoeff());
    return sd.cwiseMax(floor).asDiagonal();
  }
}

}  // namespace

bool TargetDensity::in_support(const Vector& x) const {
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

TargetDensity uniform_box_target(Vector lower, Vector upper, LogDensityFn log_likelihood) {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw std::invalid_argument("uniform_box_target: bad bounds");
  }
  if (!((upper.array() > lower.array()).all()) || !lower.allFinite() || !upper.allFinite()) {
    throw std::invalid_argument("uniform_box_target: bounds must be finite with lower < upper");
  }
  const double log_volume = (upper - lower).array().log().sum();

  TargetDensity t;
  t.dim = lower.size();
  t.lower = lower;
  t.upper = upper;
  t.log_likelihood = std::move(log_likelihood);
  t.log_prior = [lower, upper, log_volume](const Vector& x) {
    if ((x.array() < lower.array()).any() || (x.array() > upper.array()).any()) return kNegInf;
    return -log_volume;
  };
  t.sample_prior = [lower, upper](Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector x(lower.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = lower(k) + (upper(k) - lower(k)) * u(rng);
    return x;
  };
  return t;
}

Vector SampleSet::mean() const { return draws.colwise().mean().transpose(); }

Matrix SampleSet::covariance() const {
  const Matrix centered = draws.rowwise() - draws.colwise().mean();
  const double denom = std::max<double>(1.0, static_cast<double>(size() - 1));
  return centered.transpose() * centered / denom;
}

Vector SampleSet::stddev() const { return covariance().diagonal().cwiseSqrt(); }

void TmcmcConfig::validate() const {
  if (n_samples < 100) throw std::invalid_argument("tmcmc: n_samples must be >= 100");
  if (!(proposal_scale > 0.0 && proposal_scale <= 1.0)) {
    throw std::invalid_argument("tmcmc: proposal_scale must lie in (0, 1]");
  }
  if (!(target_cov_of_weights > 0.0)) {
    throw std::invalid_argument("tmcmc: target_cov_of_weights must be > 0");
  }
  if (max_stages < 1) throw std::invalid_argument("tmcmc: max_stages must be >= 1");
  if (chain_length_per_sample < 1) {
    throw std::invalid_argument("tmcmc: chain_length_per_sample must be >= 1");
  }
}

SampleSet tmcmc(const TargetDensity& target, const TmcmcConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (!target.log_prior || !target.log_likelihood || !target.sample_prior || target.dim < 1) {
    throw std::invalid_argument("tmcmc: incomplete target density");
  }
  const auto n = static_cast<std::size_t>(cfg.n_samples);
  const Eigen::Index d = target.dim;

  Matrix x(n, d);
  Vector loglik(n);
  Vector logprior(n);

  const std::uint64_t stage0 = derive_seed(seed, 0);
  parallel_for(n, [&](std::size_t i) {
    Rng rng = split_stream(stage0, i);
    const Vector xi = target.sample_prior(rng);
    x.row(i) = xi.transpose();
    logprior(i) = target.log_prior(xi);
    loglik(i) = checked_log_likelihood(target, xi);
  });

  SampleSet out;
  out.seed = seed;
  out.betas.push_back(0.0);
  double beta = 0.0;
  double log_evidence = 0.0;

  for (int stage = 1; beta < 1.0; ++stage) {
    if (stage > cfg.max_stages) {
      throw SamplerError("tmcmc: exceeded max_stages = " + std::to_string(cfg.max_stages) +
                         " at beta = " + std::to_string(beta));
    }
    const double lmax = loglik.maxCoeff();
    if (!std::isfinite(lmax)) {
      throw SamplerError("tmcmc: no particle has a finite log-likelihood");
    }
    double dbeta = next_increment(loglik, lmax, 1.0 - beta, cfg.target_cov_of_weights);
    if (1.0 - (beta + dbeta) < 1e-12) dbeta = 1.0 - beta;
    const double new_beta = (dbeta == 1.0 - beta) ? 1.0 : beta + dbeta;

    const Vector w = (dbeta * (loglik.array() - lmax)).exp().matrix();
    const double wsum = w.sum();
    log_evidence += std::log(wsum / static_cast<double>(n)) + dbeta * lmax;
    const Vector p = w / wsum;

    const Vector wmean = x.transpose() * p;
    const Matrix centered = x.rowwise() - wmean.transpose();
    const Matrix wcov = centered.transpose() * p.asDiagonal() * centered;
    const Matrix prop_chol = proposal_factor(cfg.proposal_scale * cfg.proposal_scale * wcov);

    const std::uint64_t stage_seed = derive_seed(seed, static_cast<std::uint64_t>(stage));
    std::vector<std::size_t> parent(n);
    {
      Rng rng = split_stream(stage_seed, n);
      std::discrete_distribution<std::size_t> pick(p.data(), p.data() + p.size());
      for (auto& j : parent) j = pick(rng);
    }

    Matrix next_x(n, d);
    Vector next_loglik(n);
    Vector next_logprior(n);
    parallel_for(n, [&](std::size_t i) {
      Rng rng = split_stream(stage_seed, i);
      std::normal_distribution<double> normal(0.0, 1.0);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      Vector cur = x.row(parent[i]).transpose();
      double cur_ll = loglik(parent[i]);
      double cur_lp = logprior(parent[i]);
      Vector z(d);
      for (int step = 0; step < cfg.chain_length_per_sample; ++step) {
        for (Eigen::Index k = 0; k < d; ++k) z(k) = normal(rng);
        const Vector cand = cur + prop_chol * z;
        const double u = unif(rng);
        if (!target.in_support(cand)) continue;
        const double cand_lp = target.log_prior(cand);
        if (cand_lp == kNegInf) continue;
        const double cand_ll = checked_log_likelihood(target, cand);
        if (cand_ll == kNegInf) continue;
        // Resampled parents always carry a finite log-likelihood.
        const double log_ratio = cand_lp - cur_lp + new_beta * (cand_ll - cur_ll);
        if (std::log(u) < log_ratio) {
          cur = cand;
          cur_ll = cand_ll;
          cur_lp = cand_lp;
        }
      }
      next_x.row(i) = cur.transpose();
      next_loglik(i) = cur_ll;
      next_logprior(i) = cur_lp;
    });

    x = std::move(next_x);
    loglik = std::move(next_loglik);
    logprior = std::move(next_logprior);
    beta = new_beta;
    out.betas.push_back(beta);
  }

  out.draws = std::move(x);
  out.log_likelihoods = std::move(loglik);
  out.log_evidence = log_evidence;
  return out;
}

Vector modified_metropolis_step(const Vector& current, Rng& rng, double proposal_std) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector out = current;
  for (Eigen::Index k = 0; k < current.size(); ++k) {
    const double xk = current(k);
    const double xi = xk + proposal_std * normal(rng);
    const double log_ratio = 0.5 * (xk * xk - xi * xi);
    const double u = unif(rng);
    if (log_ratio >= 0.0 || std::log(u) < log_ratio) out(k) = xi;
  }
  return out;
}

}  // namespace hbm
