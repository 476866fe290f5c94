#include "hbm/reliability.hpp"

#include "hbm/parallel.hpp"
#include "hbm/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hbm::reliability {

namespace {

constexpr double kThetaFloor = 1e-3;

}  // namespace

void DisplacementLimitState::validate() const {
  if (!(d0 > 0.0)) throw std::invalid_argument("DisplacementLimitState: d0 must be > 0");
}

dynamics::Excitation UncertainInput::excitation(const Eigen::Ref<const Vector>& phi) const {
  if (phi.size() != n_phi) throw std::invalid_argument("UncertainInput: phi has wrong length");
  dynamics::Excitation exc;
  exc.phi = phi;
  exc.dt = dt;
  exc.scale = scale;
  exc.applied_dof = applied_dof;
  return exc;
}

ThetaDistribution ThetaDistribution::diagonal(const Vector& mean, const Vector& stddev) {
  if (mean.size() != stddev.size()) throw std::invalid_argument("ThetaDistribution: size mismatch");
  if ((stddev.array() < 0.0).any()) throw std::invalid_argument("ThetaDistribution: negative stddev");
  return {mean, stddev.asDiagonal().toDenseMatrix()};
}

ThetaDistribution ThetaDistribution::moment_matched(const Matrix& draws) {
  if (draws.rows() < 2) throw std::invalid_argument("ThetaDistribution: need at least two draws");
  const Vector mean = draws.colwise().mean();
  const Matrix centred = draws.rowwise() - mean.transpose();
  const Matrix cov = centred.transpose() * centred / static_cast<double>(draws.rows() - 1);
  return {mean, cholesky_lower(cov)};
}

ThetaDistribution ThetaDistribution::point(const Vector& mean) {
  return {mean, Matrix::Zero(mean.size(), mean.size())};
}

PeakResponse::PeakResponse(ReliabilitySetup setup, ThetaDistribution theta, int dof)
    : setup_(std::move(setup)), theta_(std::move(theta)), dof_(dof),
      clamps_(std::make_shared<std::atomic<long long>>(0)) {
  if (theta_.chol.rows() != theta_.dim() || theta_.chol.cols() != theta_.dim()) {
    throw std::invalid_argument("PeakResponse: theta factor has wrong shape");
  }
  if (theta_.dim() != setup_.model.n_dof()) throw std::invalid_argument("PeakResponse: theta/model size mismatch");
  if (setup_.input.n_phi < 1) throw std::invalid_argument("PeakResponse: n_phi must be >= 1");
  if (dof_ >= setup_.model.n_dof()) throw std::invalid_argument("PeakResponse: dof out of range");
}

double PeakResponse::operator()(const Vector& u) const {
  if (u.size() != dim()) throw std::invalid_argument("PeakResponse: u has wrong length");
  const Eigen::Index n = theta_.dim();
  dynamics::ShearModel model = setup_.model;
  model.theta = theta_.mean + theta_.chol.triangularView<Eigen::Lower>() * u.head(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (model.theta(k) < kThetaFloor) {
      model.theta(k) = kThetaFloor;
      ++*clamps_;
    }
  }
  return dynamics::peak_displacement(model, setup_.input.excitation(u.tail(setup_.input.n_phi)), dof_);
}

SubsetResult failure_probability(const PeakResponse& response, const DisplacementLimitState& ls,
                                 const SubsetSimConfig& cfg, std::uint64_t seed) {
  ls.validate();
  const double d0 = ls.d0;
  return subset_simulation([&](const Vector& u) { return d0 - response(u); }, response.dim(), cfg, seed);
}

bool FailureCurve::monotone_non_increasing() const {
  for (std::size_t j = 1; j < p_f.size(); ++j)
    if (p_f[j] > p_f[j - 1]) return false;
  return true;
}

ThetaDistribution mean_hyper_distribution(const SampleSet& hyper, int n_theta) {
  if (hyper.size() < 1) throw std::invalid_argument("mean_hyper_distribution: empty hyper sample set");
  if (hyper.dim() < 2 * n_theta) throw std::invalid_argument("mean_hyper_distribution: too few columns");
  const Vector mean = hyper.mean();
  return ThetaDistribution::diagonal(mean.head(n_theta), mean.segment(n_theta, n_theta));
}

namespace {

/// Exceedance probabilities P[peak >= d0_j] for the whole grid from one shared path.
std::vector<SubsetResult> exceedance_curve(const PeakResponse& response, const std::vector<double>& d0_grid,
                                           const SubsetSimConfig& cfg, std::uint64_t seed) {
  std::vector<double> offsets(d0_grid.size());
  for (std::size_t j = 0; j < d0_grid.size(); ++j) offsets[j] = -d0_grid[j];
  return subset_simulation_multi([&](const Vector& u) { return -response(u); }, response.dim(), offsets, cfg, seed);
}

}  // namespace

FailureCurve failure_curve(const ReliabilitySetup& setup, const ThetaDistribution& theta,
                           const std::vector<double>& d0_grid, const SubsetSimConfig& cfg, std::uint64_t seed,
                           const std::string& method) {
  const PeakResponse response(setup, theta);
  const std::vector<SubsetResult> curve_results = exceedance_curve(response, d0_grid, cfg, derive_seed(seed, 0));
  FailureCurve curve;
  curve.method = method;
  curve.d0 = d0_grid;
  curve.p_f.assign(d0_grid.size(), 0.0);
  curve.n_censored.assign(d0_grid.size(), 0);
  for (std::size_t j = 0; j < d0_grid.size(); ++j) {
    const SubsetResult& r = curve_results[j];
    curve.p_f[j] = r.p_f;
    curve.n_censored[j] = r.censored ? 1 : 0;
    curve.n_evaluations = std::max(curve.n_evaluations, r.n_evaluations);
  }
  curve.clamp_events = response.clamp_events();
  return curve;
}

FailureCurve failure_prob_mean_hyper(const SampleSet& hyper, int n_theta, const ReliabilitySetup& setup,
                                     const std::vector<double>& d0_grid, const SubsetSimConfig& cfg,
                                     std::uint64_t seed) {
  return failure_curve(setup, mean_hyper_distribution(hyper, n_theta), d0_grid, cfg, seed, "hbm_mean");
}

FailureCurve failure_prob_full_hyper(const SampleSet& hyper, int n_theta, int m, const ReliabilitySetup& setup,
                                     const std::vector<double>& d0_grid, const SubsetSimConfig& cfg,
                                     std::uint64_t seed) {
  if (hyper.size() < 1) throw std::invalid_argument("failure_prob_full_hyper: empty hyper sample set");
  if (m < 1 || m > hyper.size()) throw std::invalid_argument("failure_prob_full_hyper: need 1 <= M <= N_s");
  if (hyper.dim() < 2 * n_theta) throw std::invalid_argument("failure_prob_full_hyper: too few columns");

  std::vector<Eigen::Index> rows(static_cast<std::size_t>(hyper.size()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  Rng pick = split_stream(seed, 0);
  for (int i = 0; i < m; ++i) {
    std::uniform_int_distribution<Eigen::Index> dist(i, hyper.size() - 1);
    std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(dist(pick))]);
  }

  std::vector<PeakResponse> responses;
  responses.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const Vector psi = hyper.draws.row(rows[static_cast<std::size_t>(i)]).transpose();
    responses.emplace_back(setup, ThetaDistribution::diagonal(psi.head(n_theta), psi.segment(n_theta, n_theta)));
  }

  const std::size_t n_pts = d0_grid.size();
  std::vector<std::vector<SubsetResult>> per_sample(static_cast<std::size_t>(m));
  parallel_for(per_sample.size(), [&](std::size_t i) {
    per_sample[i] = exceedance_curve(responses[i], d0_grid, cfg, derive_seed(derive_seed(seed, i + 1), 0));
  });

  FailureCurve curve;
  curve.method = "hbm_full";
  curve.d0 = d0_grid;
  curve.p_f.assign(n_pts, 0.0);
  curve.n_censored.assign(n_pts, 0);
  curve.n_hyper = m;
  for (const auto& results : per_sample) {
    long long evals = 0;
    for (std::size_t j = 0; j < n_pts; ++j) {
      curve.p_f[j] += results[j].p_f / m;
      curve.n_censored[j] += results[j].censored ? 1 : 0;
      evals = std::max(evals, results[j].n_evaluations);
    }
    curve.n_evaluations += evals;
  }
  for (const auto& r : responses) curve.clamp_events += r.clamp_events();
  return curve;
}

FailureCurve failure_prob_cbm(const SampleSet& cbm, int n_theta, const ReliabilitySetup& setup,
                              const std::vector<double>& d0_grid, const SubsetSimConfig& cfg, std::uint64_t seed) {
  if (cbm.size() < 2) throw std::invalid_argument("failure_prob_cbm: empty CBM sample set");
  if (cbm.dim() < n_theta) throw std::invalid_argument("failure_prob_cbm: too few columns");
  const ThetaDistribution theta = ThetaDistribution::moment_matched(cbm.draws.leftCols(n_theta));
  return failure_curve(setup, theta, d0_grid, cfg, seed, "cbm");
}

std::vector<double> predictive_peaks(const ReliabilitySetup& setup, const ThetaDistribution& theta, int n,
                                     std::uint64_t seed, int dof) {
  if (n < 1) throw std::invalid_argument("predictive_peaks: n must be >= 1");
  const PeakResponse response(setup, theta, dof);
  std::vector<double> out(static_cast<std::size_t>(n));
  parallel_for(out.size(), [&](std::size_t i) {
    Rng rng = split_stream(seed, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector u(response.dim());
    for (Eigen::Index k = 0; k < u.size(); ++k) u(k) = normal(rng);
    out[i] = response(u);
  });
  return out;
}

std::vector<double> predictive_peaks_hyper(const ReliabilitySetup& setup, const SampleSet& hyper, int n_theta, int n,
                                           std::uint64_t seed, int dof) {
  if (n < 1) throw std::invalid_argument("predictive_peaks_hyper: n must be >= 1");
  if (hyper.size() < 1 || hyper.dim() < 2 * n_theta) throw std::invalid_argument("predictive_peaks_hyper: bad hyper set");
  const std::uint64_t pick_root = derive_seed(seed, ~std::uint64_t{0});
  std::vector<double> out(static_cast<std::size_t>(n));
  parallel_for(out.size(), [&](std::size_t i) {
    Rng pick = split_stream(pick_root, i);
    std::uniform_int_distribution<Eigen::Index> row(0, hyper.size() - 1);
    const Eigen::Index m = row(pick);
    const Vector mu = hyper.draws.row(m).head(n_theta).transpose();
    const Vector sd = hyper.draws.row(m).segment(n_theta, n_theta).transpose();
    const PeakResponse response(setup, ThetaDistribution::diagonal(mu, sd), dof);
    Rng rng = split_stream(seed, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector u(response.dim());
    for (Eigen::Index k = 0; k < u.size(); ++k) u(k) = normal(rng);
    out[i] = response(u);
  });
  return out;
}

std::vector<double> d0_grid(const ReliabilitySetup& setup, const ThetaDistribution& theta, int n_points,
                            double p_lo, int n_crude, const SubsetSimConfig& cfg, std::uint64_t seed) {
  if (n_points < 2) throw std::invalid_argument("d0_grid: need at least two points");
  if (!(p_lo > 0.0 && p_lo < 0.5)) throw std::invalid_argument("d0_grid: p_lo must lie in (0, 0.5)");
  std::vector<double> peaks = predictive_peaks(setup, theta, n_crude, derive_seed(seed, 0));
  std::sort(peaks.begin(), peaks.end());
  const std::size_t mid = peaks.size() / 2;
  const double median = peaks.size() % 2 ? peaks[mid] : 0.5 * (peaks[mid - 1] + peaks[mid]);

  // Levels of a run whose failure domain is unreachable give the response
  // quantiles at probabilities p0, p0^2, ...
  SubsetSimConfig levels = cfg;
  levels.max_levels = std::max(1, static_cast<int>(std::ceil(std::log(p_lo) / std::log(cfg.p0) - 1e-9)));
  const double ceiling = 1e3 * peaks.back();
  const PeakResponse response(setup, theta);
  const SubsetResult r = subset_simulation([&](const Vector& u) { return ceiling - response(u); }, response.dim(),
                                           levels, derive_seed(seed, 1));
  const double top = ceiling - r.levels.back().threshold;

  std::vector<double> grid(static_cast<std::size_t>(n_points));
  for (int j = 0; j < n_points; ++j) grid[static_cast<std::size_t>(j)] = median + (top - median) * j / (n_points - 1);
  return grid;
}

}  // namespace hbm::reliability
