#include "hbm/two_stage.hpp"

#include "hbm/gauss.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <span>

namespace hbm::two_stage {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

Vector DynamicParams::pack() const {
  Vector v(theta.size() + 1);
  v << theta, sigma_pred;
  return v;
}

DynamicParams DynamicParams::unpack(const Vector& v) {
  if (v.size() < 2) throw std::invalid_argument("DynamicParams: need at least 2 entries");
  return {v.head(v.size() - 1), v(v.size() - 1)};
}

Vector DynamicHyperParams::pack() const {
  const auto n = mu_theta.size();
  Vector v(2 * n + 2);
  v << mu_theta, sigma_theta, mu_sigma, sigma_sigma;
  return v;
}

DynamicHyperParams DynamicHyperParams::unpack(const Vector& v) {
  if (v.size() < 4 || v.size() % 2 != 0) throw std::invalid_argument("DynamicHyperParams: bad packed length");
  const auto n = (v.size() - 2) / 2;
  DynamicHyperParams hp;
  hp.mu_theta = v.head(n);
  hp.sigma_theta = v.segment(n, n);
  hp.mu_sigma = v(2 * n);
  hp.sigma_sigma = v(2 * n + 1);
  return hp;
}

void DynamicHyperParams::validate() const {
  if (mu_theta.size() != sigma_theta.size() || mu_theta.size() == 0) {
    throw std::invalid_argument("DynamicHyperParams: size mismatch");
  }
  if (!(sigma_theta.array() > 0.0).all() || !(sigma_sigma > 0.0) || !(mu_sigma > 0.0)) {
    throw std::invalid_argument("DynamicHyperParams: sigmas and mu_sigma must be > 0");
  }
}

namespace {

// One forward run, scored against every dataset (they share the excitation).
double pooled_log_likelihood(const DynamicParams& params, std::span<const Matrix> datasets,
                             const ForwardSetup& setup) {
  if (!(params.sigma_pred > 0.0)) throw std::invalid_argument("log_likelihood_dynamic: sigma_pred must be > 0");
  dynamics::ShearModel model = setup.model;
  model.theta = params.theta;
  const Matrix predicted = dynamics::integrate_accelerations(model, setup.excitation);
  const Vector rms = dynamics::channel_rms(predicted);
  double total = 0.0;
  for (const Matrix& data : datasets) {
    if (data.rows() != predicted.rows() || data.cols() != predicted.cols()) {
      throw std::invalid_argument("log_likelihood_dynamic: dataset shape does not match the model");
    }
    const auto n_t = static_cast<double>(data.cols());
    for (Eigen::Index c = 0; c < data.rows(); ++c) {
      const double s = params.sigma_pred * rms(c);
      const double ssr = (data.row(c) - predicted.row(c)).squaredNorm();
      total += -n_t * (std::log(s) + 0.5 * kLog2Pi) - 0.5 * ssr / (s * s);
    }
  }
  return total;
}

}  // namespace

double log_likelihood_dynamic(const DynamicParams& params, const Matrix& data, const ForwardSetup& setup) {
  return pooled_log_likelihood(params, std::span<const Matrix>(&data, 1), setup);
}

Vector StageOnePrior::lower(int n_theta) const {
  Vector v(n_theta + 1);
  v << Vector::Constant(n_theta, theta_lo), sigma_lo;
  return v;
}

Vector StageOnePrior::upper(int n_theta) const {
  Vector v(n_theta + 1);
  v << Vector::Constant(n_theta, theta_hi), sigma_hi;
  return v;
}

StageOneResult stage_one(const Matrix& data, const ForwardSetup& setup, const StageOnePrior& prior,
                         const TmcmcConfig& cfg, std::uint64_t seed, int dataset_id) {
  const int n = setup.model.n_dof();
  auto shared_data = std::make_shared<const Matrix>(data);
  auto target = uniform_box_target(prior.lower(n), prior.upper(n), [shared_data, setup](const Vector& x) {
    return log_likelihood_dynamic(DynamicParams::unpack(x), *shared_data, setup);
  });
  StageOneResult out;
  out.samples = tmcmc(target, cfg, seed);
  out.dataset_id = dataset_id;
  return out;
}

Vector DynamicHyperBox::lower(int n_theta) const {
  Vector v(2 * n_theta + 2);
  v << Vector::Constant(n_theta, mu_theta_lo), Vector::Constant(n_theta, sigma_theta_lo), mu_sigma_lo,
      sigma_sigma_lo;
  return v;
}

Vector DynamicHyperBox::upper(int n_theta) const {
  Vector v(2 * n_theta + 2);
  v << Vector::Constant(n_theta, mu_theta_hi), Vector::Constant(n_theta, sigma_theta_hi), mu_sigma_hi,
      sigma_sigma_hi;
  return v;
}

bool DynamicHyperBox::contains(const Vector& packed) const {
  const int n = static_cast<int>((packed.size() - 2) / 2);
  return (packed.array() >= lower(n).array()).all() && (packed.array() <= upper(n).array()).all();
}

McHyperPosterior::McHyperPosterior(const std::vector<StageOneResult>& stage1, DynamicHyperBox prior, int thinning)
    : prior_(prior) {
  if (stage1.empty()) throw std::invalid_argument("McHyperPosterior: no stage-one results");
  if (thinning < 1) throw std::invalid_argument("McHyperPosterior: thinning must be >= 1");
  const Eigen::Index width = stage1.front().samples.dim();
  if (width < 2) throw std::invalid_argument("McHyperPosterior: atoms need theta and sigma columns");
  n_theta_ = static_cast<int>(width - 1);
  atoms_.reserve(stage1.size());
  for (const auto& r : stage1) {
    if (r.samples.size() < 1) throw std::invalid_argument("McHyperPosterior: empty stage-one sample set");
    if (r.samples.dim() != width) throw std::invalid_argument("McHyperPosterior: inconsistent atom dimension");
    const Eigen::Index kept = (r.samples.size() + thinning - 1) / thinning;
    Eigen::ArrayXXd a(kept, width);
    for (Eigen::Index i = 0; i < kept; ++i) a.row(i) = r.samples.draws.row(i * thinning).array();
    atoms_.push_back(std::move(a));
  }
}

double McHyperPosterior::log_likelihood(const Vector& packed) const {
  const DynamicHyperParams hp = DynamicHyperParams::unpack(packed);
  hp.validate();
  if (hp.mu_theta.size() != n_theta_) throw std::invalid_argument("McHyperPosterior: dimension mismatch");

  Eigen::ArrayXd centre(n_theta_ + 1);
  Eigen::ArrayXd inv_sd(n_theta_ + 1);
  centre << hp.mu_theta.array(), hp.mu_sigma;
  inv_sd << hp.sigma_theta.array().inverse(), 1.0 / hp.sigma_sigma;
  // Population normaliser, including the truncation of sigma_pred at zero.
  const double log_norm = inv_sd.log().sum() - 0.5 * static_cast<double>(n_theta_ + 1) * kLog2Pi -
                          std::log(std_normal_cdf(hp.mu_sigma / hp.sigma_sigma));

  thread_local Eigen::ArrayXd quad;
  double total = 0.0;
  for (const auto& a : atoms_) {
    quad.setZero(a.rows());
    for (Eigen::Index k = 0; k <= n_theta_; ++k) quad += ((a.col(k) - centre(k)) * inv_sd(k)).square();
    const double qmin = quad.minCoeff();
    const double sum = (-0.5 * (quad - qmin)).exp().sum();
    total += std::log(sum / static_cast<double>(a.rows())) - 0.5 * qmin + log_norm;
  }
  return total;
}

double McHyperPosterior::log_density(const Vector& packed) const {
  if (!prior_.contains(packed)) return kNegInf;
  const Vector width = prior_.upper(n_theta_) - prior_.lower(n_theta_);
  return -width.array().log().sum() + log_likelihood(packed);
}

double McHyperPosterior::operator()(const DynamicHyperParams& hp) const { return log_density(hp.pack()); }

double hyper_log_posterior_mc(const DynamicHyperParams& hp, const std::vector<StageOneResult>& stage1,
                              const DynamicHyperBox& prior) {
  return McHyperPosterior(stage1, prior)(hp);
}

SampleSet stage_two(const std::vector<StageOneResult>& stage1, const DynamicHyperBox& prior,
                    const TmcmcConfig& cfg, std::uint64_t seed, int thinning) {
  if (stage1.size() < 2) throw std::invalid_argument("stage_two: need at least two datasets");
  auto posterior = std::make_shared<McHyperPosterior>(stage1, prior, thinning);
  const int n = posterior->n_theta();
  auto target = uniform_box_target(prior.lower(n), prior.upper(n),
                                   [posterior](const Vector& x) { return posterior->log_likelihood(x); });
  return tmcmc(target, cfg, seed);
}

SampleSet cbm_dynamic(const std::vector<Matrix>& datasets, const ForwardSetup& setup, const StageOnePrior& prior,
                      const TmcmcConfig& cfg, std::uint64_t seed) {
  if (datasets.empty()) throw std::invalid_argument("cbm_dynamic: no datasets");
  const int n = setup.model.n_dof();
  // sum_i |d_i - p|^2 = sum_i |d_i - mean|^2 + N |mean - p|^2, per channel
  auto mean = std::make_shared<Matrix>(Matrix::Zero(datasets.front().rows(), datasets.front().cols()));
  for (const Matrix& d : datasets) {
    if (d.rows() != mean->rows() || d.cols() != mean->cols()) {
      throw std::invalid_argument("cbm_dynamic: datasets differ in shape");
    }
    *mean += d;
  }
  *mean /= static_cast<double>(datasets.size());
  auto scatter = std::make_shared<Vector>(Vector::Zero(mean->rows()));
  for (const Matrix& d : datasets) *scatter += (d - *mean).rowwise().squaredNorm();
  const auto n_sets = static_cast<double>(datasets.size());

  auto target = uniform_box_target(prior.lower(n), prior.upper(n), [mean, scatter, n_sets, setup](const Vector& x) {
    const DynamicParams params = DynamicParams::unpack(x);
    if (!(params.sigma_pred > 0.0)) throw std::invalid_argument("cbm_dynamic: sigma_pred must be > 0");
    dynamics::ShearModel model = setup.model;
    model.theta = params.theta;
    const Matrix predicted = dynamics::integrate_accelerations(model, setup.excitation);
    if (predicted.rows() != mean->rows() || predicted.cols() != mean->cols()) {
      throw std::invalid_argument("cbm_dynamic: dataset shape does not match the model");
    }
    const Vector rms = dynamics::channel_rms(predicted);
    const auto n_t = static_cast<double>(mean->cols());
    double total = 0.0;
    for (Eigen::Index c = 0; c < mean->rows(); ++c) {
      const double s = params.sigma_pred * rms(c);
      const double ssr = (*scatter)(c) + n_sets * (mean->row(c) - predicted.row(c)).squaredNorm();
      total += -n_sets * n_t * (std::log(s) + 0.5 * kLog2Pi) - 0.5 * ssr / (s * s);
    }
    return total;
  });
  return tmcmc(target, cfg, seed);
}

}  // namespace hbm::two_stage
