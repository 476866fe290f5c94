#include "hbm/io/commands.hpp"

#include "hbm/linear_hbm.hpp"
#include "hbm/parallel.hpp"
#include "hbm/random.hpp"
#include "hbm/reliability.hpp"
#include "hbm/shear_model.hpp"
#include "hbm/two_stage.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <optional>
#include <set>

namespace hbm::io {

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::string> names(const std::string& stem, int n, int first = 1) {
  std::vector<std::string> out;
  for (int k = 0; k < n; ++k) out.push_back(stem + std::to_string(k + first));
  return out;
}

std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<std::string> hyper_names(ExperimentKind kind, int n_theta) {
  std::vector<std::string> out = names("mu_theta", n_theta);
  for (const auto& s : names("sigma_theta", n_theta)) out.push_back(s);
  if (kind == ExperimentKind::dynamic) {
    out.emplace_back("mu_sigma");
    out.emplace_back("sigma_sigma");
  }
  return out;
}

std::vector<std::string> dynamic_param_names() {
  std::vector<std::string> out = names("theta", 3);
  out.emplace_back("sigma_pred");
  return out;
}

void log(const FitOptions& opts, const std::string& msg) {
  if (opts.verbose) std::clog << msg << std::endl;
}

// Starts or resumes the manifest of a run directory; a different config in
// the same directory is an error.
RunManifest open_run(const ExperimentConfig& cfg, const fs::path& out, bool create) {
  const std::string hash = cfg.hash();
  if (fs::exists(out / layout::kManifest)) {
    RunManifest m = RunManifest::load(out);
    if (m.config_hash != hash) {
      throw std::runtime_error("run directory " + out.string() + " holds config " + m.config_hash.substr(0, 12) +
                               ", not " + hash.substr(0, 12));
    }
    return m;
  }
  if (!create) throw std::runtime_error("no run in " + out.string() + "; run 'generate' first");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw std::runtime_error("cannot create output directory " + out.string());
  RunManifest m;
  m.name = cfg.name;
  m.kind = to_string(cfg.kind);
  m.config_hash = hash;
  write_json(out / layout::kConfig, cfg.to_json());
  return m;
}

void close_phase(RunManifest& m, const fs::path& out, const std::string& phase, PhaseRecord rec, Clock::time_point t0) {
  rec.wall_clock_s = std::chrono::duration<double>(Clock::now() - t0).count();
  rec.threads = num_threads();
  m.phases[phase] = rec;
  m.refresh_inventory(out);
  m.save(out);
}

template <class F>
auto in_phase(const std::string& phase, F&& f) {
  try {
    return f();
  } catch (const PhaseError&) {
    throw;
  } catch (const std::exception& e) {
    throw PhaseError(phase, e.what());
  }
}

std::vector<SummaryRow> mean_std_rows(int n, const SampleSet& s, const std::vector<std::string>& params) {
  const Vector mean = s.mean();
  const Vector sd = s.stddev();
  std::vector<SummaryRow> rows;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    rows.push_back({n, params[k], "mean", mean(i)});
    rows.push_back({n, params[k], "std", sd(i)});
  }
  return rows;
}

json sampler_info(const SampleSet& s) {
  json j = {{"seed", s.seed}, {"stages", s.betas.size()}, {"n_samples", s.size()}};
  j["log_evidence"] = s.log_evidence ? json(*s.log_evidence) : json(nullptr);
  return j;
}

// ---- reading inputs on the fit side ----

json checked_meta(const fs::path& csv, const std::string& kind) {
  refuse_truth(csv);
  json meta = read_json(sidecar_path(csv));
  if (meta.value("kind", "") != kind) {
    throw std::runtime_error(csv.string() + ": expected a '" + kind + "' file, found '" + meta.value("kind", "") + "'");
  }
  return meta;
}

Table read_checked(const fs::path& csv, const std::string& kind, json* meta = nullptr) {
  checked_meta(csv, kind);
  return read_table(csv, meta);
}

linear::LinearModel load_design(const fs::path& out) {
  json meta;
  const Table t = read_checked(out / layout::kData / "design.csv", "design", &meta);
  linear::LinearModel model{t.values.transpose(), meta.at("sigma_noise").get<double>()};
  model.validate();
  return model;
}

dynamics::Excitation load_excitation(const fs::path& out) {
  json meta;
  const Table t = read_checked(out / layout::kData / "excitation.csv", "excitation", &meta);
  dynamics::Excitation e;
  e.phi = t.values.col(0);
  e.dt = meta.at("dt").get<double>();
  e.scale = meta.at("scale").get<double>();
  e.applied_dof = meta.at("applied_dof").get<int>();
  return e;
}

Matrix load_dataset(const fs::path& out, int i) {
  const fs::path p = out / layout::dataset_file(i);
  if (!fs::exists(p)) throw std::runtime_error("missing dataset " + p.string() + "; run 'generate' first");
  return read_checked(p, "dataset").values;
}

// ---- generate ----

void generate_linear(const ExperimentConfig& cfg, const fs::path& out, PhaseRecord& rec) {
  const GenerationConfig& g = cfg.generation;
  const int n_data = *std::max_element(g.n_data.begin(), g.n_data.end());
  Rng design_rng = split_stream(derive_seed(g.seed, 0), 0);
  linear::LinearModel model;
  model.A = linear::random_design(cfg.n_theta(), n_data, design_rng, g.design_lo, g.design_hi);
  const Vector clean_mean = model.A.transpose() * g.hyper_mean;
  model.sigma_noise = g.noise_frac * std::sqrt(clean_mean.squaredNorm() / n_data);
  rec.seeds["design"] = derive_seed(g.seed, 0);
  rec.seeds["datasets"] = derive_seed(g.seed, 1);

  const HyperParams gen(g.hyper_mean, g.hyper_std);
  const linear::SimulatedLinear sim = linear::simulate_datasets(model, gen, cfg.max_datasets(), derive_seed(g.seed, 1));
  write_table(out / layout::kData / "design.csv", names("a_", cfg.n_theta()), model.A.transpose(),
              {{"kind", "design"}, {"sigma_noise", model.sigma_noise}, {"noise_frac", g.noise_frac}});
  Matrix theta(static_cast<Eigen::Index>(sim.datasets.size()), cfg.n_theta());
  for (std::size_t i = 0; i < sim.datasets.size(); ++i) {
    const int id = static_cast<int>(i);
    write_table(out / layout::dataset_file(id), {"y"}, sim.datasets[i], {{"kind", "dataset"}, {"index", id}});
    theta.row(id) = sim.truth[i].transpose();
    const Vector clean = model.A.transpose() * sim.truth[i];
    write_table(out / layout::kTruth / ("clean_" + layout::dataset_file(id).substr(5)), {"y"}, clean,
                {{"kind", "truth"}, {"index", id}});
  }
  write_table(out / layout::kTruth / "theta.csv", names("theta", cfg.n_theta()), theta, {{"kind", "truth"}});
}

void generate_dynamic(const ExperimentConfig& cfg, const fs::path& out, PhaseRecord& rec) {
  const GenerationConfig& g = cfg.generation;
  Rng rng = split_stream(derive_seed(g.seed, 0), 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  dynamics::Excitation exc;
  exc.phi.resize(g.n_steps);
  for (auto& v : exc.phi) v = normal(rng);
  exc.dt = g.dt;
  exc.scale = g.scale;
  exc.applied_dof = g.applied_dof;
  rec.seeds["excitation"] = derive_seed(g.seed, 0);
  rec.seeds["datasets"] = derive_seed(g.seed, 1);

  const HyperParams gen(g.hyper_mean, g.hyper_std);
  const auto data = dynamics::generate_datasets(gen, cfg.max_datasets(), exc, g.noise_frac, derive_seed(g.seed, 1));
  write_table(out / layout::kData / "excitation.csv", {"phi"}, exc.phi,
              {{"kind", "excitation"}, {"dt", exc.dt}, {"scale", exc.scale}, {"applied_dof", exc.applied_dof}});
  Matrix theta(static_cast<Eigen::Index>(data.size()), 3);
  const auto channels = names("a_", 3);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int id = static_cast<int>(i);
    write_table(out / layout::dataset_file(id), channels, data[i].accelerations.transpose(),
                {{"kind", "dataset"}, {"index", id}, {"noise_frac", g.noise_frac}});
    write_table(out / layout::kTruth / ("clean_" + layout::dataset_file(id).substr(5)), channels,
                data[i].clean.transpose(), {{"kind", "truth"}, {"index", id}});
    theta.row(id) = data[i].truth.transpose();
  }
  write_table(out / layout::kTruth / "theta.csv", names("theta", 3), theta, {{"kind", "truth"}});
}

// ---- fit ----

void fit_linear(const ExperimentConfig& cfg, const fs::path& out, PhaseRecord& rec, const FitOptions& opts) {
  const linear::LinearModel model = load_design(out);
  const int n_theta = cfg.n_theta();
  if (model.n_theta() != n_theta) throw std::runtime_error("design does not match the configured parameter count");

  // Posterior standard deviation against the number of data points (nested columns).
  std::vector<SummaryRow> sigma_rows;
  for (int nd : sorted_unique(cfg.generation.n_data)) {
    linear::LinearModel sub{model.A.leftCols(nd), model.sigma_noise};
    const linear::GaussianSummary s = linear::reduce_dataset(sub, Vector::Zero(nd));
    for (int k = 0; k < n_theta; ++k) sigma_rows.push_back({nd, "theta" + std::to_string(k + 1), "sqrt_sigma_star", std::sqrt(s.sigma_star(k, k))});
  }
  write_summary(out / layout::kTables / "sigma_star.csv", "N_d", sigma_rows);

  std::vector<Vector> ys;
  std::vector<linear::GaussianSummary> summaries;
  for (int i = 0; i < cfg.max_datasets(); ++i) {
    ys.push_back(load_dataset(out, i).col(0));
    summaries.push_back(linear::reduce_dataset(model, ys.back()));
  }

  const auto params = hyper_names(cfg.kind, n_theta);
  std::vector<SummaryRow> hyper_rows, cbm_rows;
  json info = json::object();
  for (int nd : sorted_unique(cfg.generation.n_datasets)) {
    const std::uint64_t seed = derive_seed(cfg.sampler.seed, static_cast<std::uint64_t>(nd));
    rec.seeds["hyper_ND" + std::to_string(nd)] = seed;
    log(opts, "fit: hyper posterior, N_D = " + std::to_string(nd));
    const std::vector<linear::GaussianSummary> sub(summaries.begin(), summaries.begin() + nd);
    const SampleSet hyper = linear::sample_hyper_posterior(sub, cfg.sampler.linear_prior, cfg.sampler.hyper, seed);
    write_samples(out / layout::hyper_file(nd), hyper, params, {{"n_datasets", nd}, {"method", "hbm"}});
    for (auto& r : mean_std_rows(nd, hyper, params)) hyper_rows.push_back(r);
    info[std::to_string(nd)] = sampler_info(hyper);

    if (cfg.sampler.run_cbm) {
      const linear::GaussianSummary cbm = linear::cbm_posterior(model, std::span<const Vector>(ys.data(), nd));
      Matrix values(n_theta, n_theta + 1);
      values << cbm.theta_star, cbm.sigma_star;
      std::vector<std::string> cols{"mean"};
      for (const auto& c : names("cov_", n_theta)) cols.push_back(c);
      write_table(out / layout::cbm_file(nd), cols, values, {{"kind", "gaussian"}, {"n_datasets", nd}, {"method", "cbm"}});
      for (int k = 0; k < n_theta; ++k) {
        cbm_rows.push_back({nd, "theta" + std::to_string(k + 1), "mean", cbm.theta_star(k)});
        cbm_rows.push_back({nd, "theta" + std::to_string(k + 1), "std", std::sqrt(cbm.sigma_star(k, k))});
      }
    }
  }
  write_summary(out / layout::kTables / "hyper_summary.csv", "N_D", hyper_rows);
  if (cfg.sampler.run_cbm) write_summary(out / layout::kTables / "cbm_summary.csv", "N_D", cbm_rows);
  write_json(out / layout::kFit / "summary.json", {{"samplers", info}});
}

std::string stage_one_fingerprint(const ExperimentConfig& cfg, const fs::path& out, int i, std::uint64_t seed) {
  const auto& p = cfg.sampler.stage_one_prior;
  const json key = {{"dataset", sha256_file(out / layout::dataset_file(i))},
                    {"excitation", sha256_file(out / layout::kData / "excitation.csv")},
                    {"sampler", cfg.to_json()["sampler"]["stage_one"]},
                    {"prior", {p.theta_lo, p.theta_hi, p.sigma_lo, p.sigma_hi}},
                    {"seed", seed},
                    {"tool_version", kToolVersion}};
  return sha256_hex(key.dump());
}

// The cached atoms are reused only if the fingerprint matches and ten stored
// log-likelihoods are reproduced by fresh model runs.
std::optional<two_stage::StageOneResult> load_stage_one(const fs::path& csv, const std::string& fingerprint,
                                                        const Matrix& data, const two_stage::ForwardSetup& setup) {
  if (!fs::exists(csv) || !fs::exists(sidecar_path(csv))) return std::nullopt;
  try {
    json meta;
    two_stage::StageOneResult r;
    r.samples = read_samples(csv, &meta);
    if (meta.value("fingerprint", "") != fingerprint) return std::nullopt;
    const Eigen::Index n = r.samples.size();
    if (n < 1) return std::nullopt;
    for (int j = 0; j < 10; ++j) {
      const Eigen::Index row = (n - 1) * j / 9;
      const double stored = r.samples.log_likelihoods(row);
      const double fresh = two_stage::log_likelihood_dynamic(
          two_stage::DynamicParams::unpack(r.samples.draws.row(row).transpose()), data, setup);
      if (std::abs(fresh - stored) > 1e-9 * std::max(1.0, std::abs(stored))) return std::nullopt;
    }
    r.dataset_id = meta.at("dataset_id").get<int>();
    r.fingerprint = fingerprint;
    return r;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void fit_dynamic(const ExperimentConfig& cfg, const fs::path& out, PhaseRecord& rec, const FitOptions& opts) {
  two_stage::ForwardSetup setup;
  setup.model = dynamics::shear_model_3dof(Vector::Ones(3));
  setup.excitation = load_excitation(out);
  const int n_max = cfg.max_datasets();
  std::vector<Matrix> data;
  for (int i = 0; i < n_max; ++i) {
    data.push_back(load_dataset(out, i).transpose());
    if (data.back().cols() != setup.excitation.n_steps()) throw std::runtime_error("dataset length differs from excitation");
  }

  const std::uint64_t s1_root = derive_seed(cfg.sampler.seed, 1);
  rec.seeds["stage_one_root"] = s1_root;
  std::vector<two_stage::StageOneResult> stage1(static_cast<std::size_t>(n_max));
  std::vector<std::string> fingerprints(stage1.size());
  std::vector<int> todo;
  for (int i = 0; i < n_max; ++i) {
    const std::uint64_t seed = derive_seed(s1_root, static_cast<std::uint64_t>(i));
    fingerprints[static_cast<std::size_t>(i)] = stage_one_fingerprint(cfg, out, i, seed);
    auto cached = load_stage_one(out / layout::stage_one_file(i), fingerprints[static_cast<std::size_t>(i)], data[static_cast<std::size_t>(i)], setup);
    if (cached) {
      stage1[static_cast<std::size_t>(i)] = std::move(*cached);
    } else {
      todo.push_back(i);
    }
  }
  log(opts, "fit: stage one for " + std::to_string(todo.size()) + " of " + std::to_string(n_max) + " datasets (" +
                std::to_string(n_max - static_cast<int>(todo.size())) + " cached)");
  parallel_for(todo.size(), [&](std::size_t t) {
    const int i = todo[t];
    const auto idx = static_cast<std::size_t>(i);
    const std::uint64_t seed = derive_seed(s1_root, static_cast<std::uint64_t>(i));
    stage1[idx] = two_stage::stage_one(data[idx], setup, cfg.sampler.stage_one_prior, cfg.sampler.stage_one, seed, i);
    stage1[idx].fingerprint = fingerprints[idx];
    write_samples(out / layout::stage_one_file(i), stage1[idx].samples, dynamic_param_names(),
                  {{"fingerprint", fingerprints[idx]}, {"dataset_id", i}});
  });

  const auto params = hyper_names(cfg.kind, 3);
  std::vector<SummaryRow> hyper_rows, cbm_rows;
  json info = json::object();
  for (int nd : sorted_unique(cfg.generation.n_datasets)) {
    const std::uint64_t seed = derive_seed(derive_seed(cfg.sampler.seed, 2), static_cast<std::uint64_t>(nd));
    rec.seeds["stage_two_ND" + std::to_string(nd)] = seed;
    log(opts, "fit: stage two, N_D = " + std::to_string(nd));
    const std::vector<two_stage::StageOneResult> sub(stage1.begin(), stage1.begin() + nd);
    const SampleSet hyper =
        two_stage::stage_two(sub, cfg.sampler.dynamic_prior, cfg.sampler.hyper, seed, cfg.sampler.thinning);
    write_samples(out / layout::hyper_file(nd), hyper, params, {{"n_datasets", nd}, {"method", "hbm"}});
    for (auto& r : mean_std_rows(nd, hyper, params)) hyper_rows.push_back(r);
    json entry = {{"stage_two", sampler_info(hyper)}};

    if (cfg.sampler.run_cbm) {
      const std::uint64_t cseed = derive_seed(derive_seed(cfg.sampler.seed, 3), static_cast<std::uint64_t>(nd));
      rec.seeds["cbm_ND" + std::to_string(nd)] = cseed;
      log(opts, "fit: pooled posterior, N_D = " + std::to_string(nd));
      const std::vector<Matrix> pooled(data.begin(), data.begin() + nd);
      const SampleSet cbm =
          two_stage::cbm_dynamic(pooled, setup, cfg.sampler.cbm_prior, cfg.sampler.cbm, cseed);
      write_samples(out / layout::cbm_file(nd), cbm, dynamic_param_names(), {{"n_datasets", nd}, {"method", "cbm"}});
      for (auto& r : mean_std_rows(nd, cbm, dynamic_param_names())) cbm_rows.push_back(r);
      entry["cbm"] = sampler_info(cbm);
    }
    info[std::to_string(nd)] = entry;
  }
  write_summary(out / layout::kTables / "hyper_summary.csv", "N_D", hyper_rows);
  if (cfg.sampler.run_cbm) write_summary(out / layout::kTables / "cbm_summary.csv", "N_D", cbm_rows);
  write_json(out / layout::kFit / "summary.json",
             {{"samplers", info}, {"stage_one_samples", cfg.sampler.stage_one.n_samples}});
}

// ---- reliability ----

// Threshold at which a decreasing curve crosses p, by linear interpolation
// in log p; nullopt when p is not bracketed.
std::optional<double> crossing(const std::vector<double>& x, const std::vector<double>& p, double target) {
  for (std::size_t j = 1; j < x.size(); ++j) {
    if (p[j - 1] >= target && p[j] <= target && p[j] > 0.0) {
      if (p[j - 1] == p[j]) return x[j];
      const double t = (std::log(p[j - 1]) - std::log(target)) / (std::log(p[j - 1]) - std::log(p[j]));
      return x[j - 1] + t * (x[j] - x[j - 1]);
    }
  }
  return std::nullopt;
}

// Largest ratio between two curves over the points where either is >= floor.
double max_ratio(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  double worst = 1.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (std::max(a[j], b[j]) < floor) continue;
    if (a[j] <= 0.0 || b[j] <= 0.0) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, std::max(a[j] / b[j], b[j] / a[j]));
  }
  return worst;
}

json stats_json(const std::vector<double>& v) {
  const Eigen::Map<const Vector> m(v.data(), static_cast<Eigen::Index>(v.size()));
  const double mean = m.mean();
  const double sd = std::sqrt((m.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
  return {{"mean", mean}, {"std", sd}, {"n", v.size()}};
}

void append_curve(std::vector<CurveRow>& rows, const std::vector<double>& x, const std::vector<double>& p,
                  const std::string& method, std::uint64_t seed) {
  for (std::size_t j = 0; j < x.size(); ++j) rows.push_back({x[j], p[j], method, seed});
}

json reliability_linear(const ExperimentConfig& cfg, const fs::path& out, PhaseRecord& rec) {
  const linear::LinearModel model = load_design(out);
  const int nd = cfg.reliability_datasets();
  const SampleSet hyper = read_samples(out / layout::hyper_file(nd));
  json cbm_meta;
  const Table cbm_table = read_checked(out / layout::cbm_file(nd), "gaussian", &cbm_meta);
  const linear::GaussianSummary cbm{cbm_table.values.col(0), cbm_table.values.rightCols(cbm_table.values.cols() - 1)};

  Vector c = Vector::Zero(model.n_data());
  c(cfg.reliability.linear_c_index) = 1.0;
  const std::vector<double> grid = linear::threshold_grid(hyper, c, model, cfg.reliability.grid_points,
                                                          cfg.reliability.linear_p_hi, cfg.reliability.p_lo);
  SampleSet mean_hyper;
  mean_hyper.draws = hyper.mean().transpose();
  mean_hyper.log_likelihoods = Vector::Zero(1);

  const std::uint64_t seed = cfg.reliability.seed;
  rec.seeds["curves"] = seed;
  const auto full = linear::failure_curve_linear(hyper, c, grid, model);
  const auto mean = linear::failure_curve_linear(mean_hyper, c, grid, model);
  const auto classical = linear::failure_curve_gaussian(cbm, c, grid, model);
  std::vector<CurveRow> rows;
  append_curve(rows, grid, mean, "hbm_mean", seed);
  append_curve(rows, grid, full, "hbm_full", seed);
  append_curve(rows, grid, classical, "cbm", seed);
  write_curves(out / layout::kReliability / "curves.csv", rows);

  const double b_star = linear::threshold_at_probability(hyper, c, model, 1e-2);
  const double beta_cbm = linear::reliability_index(cbm.theta_star, cbm.sigma_star, {b_star, c}, model);
  const double log10_p_cbm = std_normal_logcdf(-beta_cbm) / std::log(10.0);
  auto monotone = [](const std::vector<double>& p) {
    for (std::size_t j = 1; j < p.size(); ++j)
      if (p[j] > p[j - 1]) return false;
    return true;
  };
  return {{"n_datasets", nd},
          {"c_index", cfg.reliability.linear_c_index},
          {"methods",
           {{"hbm_mean", {{"monotone", monotone(mean)}}},
            {"hbm_full", {{"monotone", monotone(full)}, {"n_hyper", hyper.size()}}},
            {"cbm", {{"monotone", monotone(classical)}}}}},
          {"separation",
           {{"reference", "hbm_full"},
            {"threshold", b_star},
            {"p_hbm", 1e-2},
            {"beta_cbm", beta_cbm},
            {"log10_p_cbm", log10_p_cbm},
            {"log10_ratio", std::abs(-2.0 - log10_p_cbm)}}},
          {"mean_vs_full_max_ratio", max_ratio(mean, full, 1e-4)}};
}

json reliability_dynamic(const ExperimentConfig& cfg, const fs::path& out, PhaseRecord& rec) {
  namespace rel = hbm::reliability;
  const ReliabilitySettings& r = cfg.reliability;
  const int nd = cfg.reliability_datasets();
  const SampleSet hyper = read_samples(out / layout::hyper_file(nd));
  const SampleSet cbm = read_samples(out / layout::cbm_file(nd));

  rel::ReliabilitySetup setup;
  setup.model = dynamics::shear_model_3dof(Vector::Ones(3));
  setup.input.n_phi = r.n_phi;
  setup.input.dt = cfg.generation.dt;
  setup.input.scale = r.input_scale;
  setup.input.applied_dof = cfg.generation.applied_dof;

  const rel::ThetaDistribution mean_dist = rel::mean_hyper_distribution(hyper, 3);
  const rel::ThetaDistribution cbm_dist = rel::ThetaDistribution::moment_matched(cbm.draws.leftCols(3));
  const std::uint64_t grid_seed = derive_seed(r.seed, 0), curve_seed = derive_seed(r.seed, 1),
                      pred_seed = derive_seed(r.seed, 2), check_seed = derive_seed(r.seed, 3);
  rec.seeds["grid"] = grid_seed;
  rec.seeds["curves"] = curve_seed;
  rec.seeds["predictive"] = pred_seed;
  rec.seeds["separation"] = check_seed;

  const std::vector<double> grid = rel::d0_grid(setup, mean_dist, r.grid_points, r.p_lo, r.n_crude, r.subset, grid_seed);
  const int m = std::min<int>(r.m_hyper, static_cast<int>(hyper.size()));
  const rel::FailureCurve mean = rel::failure_prob_mean_hyper(hyper, 3, setup, grid, r.subset, curve_seed);
  const rel::FailureCurve full = rel::failure_prob_full_hyper(hyper, 3, m, setup, grid, r.subset, curve_seed);
  const rel::FailureCurve classical = rel::failure_prob_cbm(cbm, 3, setup, grid, r.subset, curve_seed);
  std::vector<CurveRow> rows;
  for (const auto* c : {&mean, &full, &classical}) append_curve(rows, c->d0, c->p_f, c->method, curve_seed);
  write_curves(out / layout::kReliability / "curves.csv", rows);

  // Posterior predictive peak displacement under each method, common inputs.
  const auto pk_mean = rel::predictive_peaks(setup, mean_dist, r.predictive_draws, pred_seed, r.dof);
  const auto pk_full = rel::predictive_peaks_hyper(setup, hyper, 3, r.predictive_draws, pred_seed, r.dof);
  const auto pk_cbm = rel::predictive_peaks(setup, cbm_dist, r.predictive_draws, pred_seed, r.dof);
  double lo = 1e300, hi = -1e300;
  for (const auto* v : {&pk_mean, &pk_full, &pk_cbm}) {
    lo = std::min(lo, *std::min_element(v->begin(), v->end()));
    hi = std::max(hi, *std::max_element(v->begin(), v->end()));
  }
  const int bins = r.histogram_bins;
  const double width = (hi - lo) / bins;
  Matrix hist = Matrix::Zero(bins, 5);
  for (int b = 0; b < bins; ++b) {
    hist(b, 0) = lo + b * width;
    hist(b, 1) = b + 1 == bins ? hi : lo + (b + 1) * width;
  }
  int col = 2;
  for (const auto* v : {&pk_mean, &pk_full, &pk_cbm}) {
    for (double x : *v) {
      const int b = width > 0.0 ? std::min(bins - 1, static_cast<int>((x - lo) / width)) : 0;
      hist(b, col) += 1.0;
    }
    ++col;
  }
  write_table(out / layout::kReliability / "histograms.csv", {"bin_lo", "bin_hi", "hbm_mean", "hbm_full", "cbm"}, hist,
              {{"kind", "histogram"}, {"draws", r.predictive_draws}, {"seed", pred_seed}});

  json separation = {{"reference", "hbm_mean"}, {"p_hbm", 1e-2}};
  if (const auto d_star = crossing(mean.d0, mean.p_f, 1e-2)) {
    const rel::SubsetResult at_cbm = rel::failure_probability(rel::PeakResponse(setup, cbm_dist, r.dof),
                                                              {*d_star, r.dof}, r.subset, check_seed);
    separation["threshold"] = *d_star;
    separation["p_cbm"] = at_cbm.p_f;
    separation["cbm_censored"] = at_cbm.censored;
    // a censored run only bounds the probability from above
    const double p = at_cbm.p_f > 0.0 ? at_cbm.p_f : at_cbm.upper_bound;
    separation["log10_ratio"] = std::abs(-2.0 - std::log10(p));
  } else {
    separation["threshold"] = nullptr;
    separation["log10_ratio"] = nullptr;
  }

  auto method_json = [](const rel::FailureCurve& c) {
    int censored = 0;
    for (int v : c.n_censored) censored += v;
    return json{{"monotone", c.monotone_non_increasing()},
                {"n_hyper", c.n_hyper},
                {"censored_runs", censored},
                {"clamp_events", c.clamp_events},
                {"evaluations", c.n_evaluations}};
  };
  return {{"n_datasets", nd},
          {"m_hyper", m},
          {"methods", {{"hbm_mean", method_json(mean)}, {"hbm_full", method_json(full)}, {"cbm", method_json(classical)}}},
          {"separation", separation},
          {"mean_vs_full_max_ratio", max_ratio(mean.p_f, full.p_f, 1e-4)},
          {"predictive", {{"hbm_mean", stats_json(pk_mean)}, {"hbm_full", stats_json(pk_full)}, {"cbm", stats_json(pk_cbm)}}}};
}

// ---- report ----

std::map<int, std::map<std::string, std::map<std::string, double>>> index_rows(const std::vector<SummaryRow>& rows) {
  std::map<int, std::map<std::string, std::map<std::string, double>>> idx;
  for (const auto& r : rows) idx[r.n][r.param][r.stat] = r.value;
  return idx;
}

json rows_json(const std::vector<SummaryRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) out.push_back({{"n", r.n}, {"param", r.param}, {"stat", r.stat}, {"value", r.value}});
  return out;
}

}  // namespace

void cmd_generate(const ExperimentConfig& cfg, const fs::path& out) {
  in_phase("generate", [&] {
    cfg.validate();
    const auto t0 = Clock::now();
    RunManifest m = open_run(cfg, out, true);
    PhaseRecord rec;
    rec.seeds["root"] = cfg.generation.seed;
    if (cfg.kind == ExperimentKind::linear) {
      generate_linear(cfg, out, rec);
    } else {
      generate_dynamic(cfg, out, rec);
    }
    close_phase(m, out, "generate", rec, t0);
  });
}

void cmd_fit(const ExperimentConfig& cfg, const fs::path& out, const FitOptions& opts) {
  in_phase("fit", [&] {
    const auto t0 = Clock::now();
    RunManifest m = open_run(cfg, out, false);
    if (!m.phases.count("generate")) throw std::runtime_error("datasets missing; run 'generate' first");
    PhaseRecord rec;
    rec.seeds["root"] = cfg.sampler.seed;
    if (cfg.kind == ExperimentKind::linear) {
      fit_linear(cfg, out, rec, opts);
    } else {
      fit_dynamic(cfg, out, rec, opts);
    }
    close_phase(m, out, "fit", rec, t0);
  });
}

void cmd_reliability(const ExperimentConfig& cfg, const fs::path& out) {
  in_phase("reliability", [&] {
    const auto t0 = Clock::now();
    RunManifest m = open_run(cfg, out, false);
    if (!m.phases.count("fit")) throw std::runtime_error("fit outputs missing; run 'fit' first");
    if (!cfg.sampler.run_cbm) throw std::runtime_error("reliability needs the pooled posterior; set sampler.run_cbm");
    PhaseRecord rec;
    rec.seeds["root"] = cfg.reliability.seed;
    json summary = cfg.kind == ExperimentKind::linear ? reliability_linear(cfg, out, rec)
                                                       : reliability_dynamic(cfg, out, rec);
    write_json(out / layout::kReliability / "summary.json", summary);
    close_phase(m, out, "reliability", rec, t0);
  });
}

json cmd_report(const std::vector<fs::path>& runs, const fs::path& out) {
  return in_phase("report", [&] {
    if (runs.empty()) throw std::runtime_error("no runs given");
    std::map<std::string, std::set<std::string>> hashes_by_name;
    std::vector<std::pair<fs::path, RunManifest>> manifests;
    std::set<std::string> seen_dirs;
    for (const auto& dir : runs) {
      const std::string key = fs::weakly_canonical(dir).string();
      if (!seen_dirs.insert(key).second) continue;
      RunManifest m = RunManifest::load(dir);
      if (!m.phases.count("fit")) throw std::runtime_error("run " + dir.string() + " has no completed fit");
      hashes_by_name[m.name].insert(m.config_hash);
      manifests.emplace_back(dir, std::move(m));
    }
    std::string conflicts;
    for (const auto& [name, hashes] : hashes_by_name) {
      if (hashes.size() < 2) continue;
      conflicts += "\n  " + name + ":";
      for (const auto& h : hashes) conflicts += " " + h.substr(0, 12);
    }
    if (!conflicts.empty()) throw std::runtime_error("conflicting config hashes for the same experiment:" + conflicts);

    json run_list = json::array();
    json experiments = json::object();
    for (const auto& [dir, m] : manifests) {
      std::vector<std::string> phases;
      for (const auto& [p, rec] : m.phases) phases.push_back(p);
      run_list.push_back({{"dir", dir.generic_string()}, {"name", m.name}, {"kind", m.kind},
                          {"config_hash", m.config_hash}, {"phases", phases}});
      json& e = experiments[m.name];
      e["kind"] = m.kind;
      e["config_hash"] = m.config_hash;
      const auto hyper_rows = read_summary(dir / layout::kTables / "hyper_summary.csv");
      e["hyper_table"] = rows_json(hyper_rows);
      if (fs::exists(dir / layout::kTables / "cbm_summary.csv")) {
        e["cbm_table"] = rows_json(read_summary(dir / layout::kTables / "cbm_summary.csv"));
      }
      if (fs::exists(dir / layout::kTables / "sigma_star.csv")) {
        e["sigma_star_table"] = rows_json(read_summary(dir / layout::kTables / "sigma_star.csv"));
      }
      json trend = json::array();
      bool monotone = true;
      double prev = std::numeric_limits<double>::infinity();
      for (const auto& [n, params] : index_rows(hyper_rows)) {
        const auto& mu = params.at("mu_theta1");
        const auto& sg = params.at("sigma_theta1");
        trend.push_back({{"N_D", n}, {"mean_mu_theta1", mu.at("mean")}, {"sd_mu_theta1", mu.at("std")},
                         {"mean_sigma_theta1", sg.at("mean")}});
        monotone = monotone && mu.at("std") < prev;
        prev = mu.at("std");
      }
      e["trend"] = trend;
      e["trend_sd_mu_theta1_decreasing"] = monotone;
      if (m.phases.count("reliability")) {
        e["reliability"] = read_json(dir / layout::kReliability / "summary.json");
        e["curves"] = (dir / layout::kReliability / "curves.csv").generic_string();
      }
    }
    const json report = {{"schema_version", kSchemaVersion}, {"tool_version", kToolVersion}, {"runs", run_list},
                         {"experiments", experiments}};
    write_json(out / "report.json", report);
    return report;
  });
}

std::vector<fs::path> load_report_config(const fs::path& path) {
  const json j = read_json(path);
  if (!j.is_object()) throw ConfigError("report config: expected an object");
  for (const auto& item : j.items()) {
    if (item.key() != "runs") throw ConfigError("report config: unknown key '" + item.key() + "'");
  }
  if (!j.contains("runs") || !j.at("runs").is_array()) throw ConfigError("report config: 'runs' must be a list");
  std::vector<fs::path> runs;
  for (const auto& r : j.at("runs")) {
    if (!r.is_string()) throw ConfigError("report config: 'runs' entries must be paths");
    const fs::path p = r.get<std::string>();
    runs.push_back(p.is_absolute() ? p : path.parent_path() / p);
  }
  return runs;
}

}  // namespace hbm::io
