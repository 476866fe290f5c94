#include "hbm/io/commands.hpp"
#include "hbm/linear_hbm.hpp"
#include "hbm/parallel.hpp"
#include "hbm/samplers.hpp"
#include "hbm/shear_model.hpp"
#include "hbm/subset_simulation.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace hbm;

namespace {

py::dict sample_dict(const SampleSet& s) {
  py::dict d;
  d["draws"] = s.draws;
  d["log_likelihoods"] = s.log_likelihoods;
  d["seed"] = s.seed;
  d["betas"] = s.betas;
  d["log_evidence"] = s.log_evidence ? py::cast(*s.log_evidence) : py::none();
  return d;
}

SampleSet sample_set(const Matrix& draws) {
  SampleSet s;
  s.draws = draws;
  s.log_likelihoods = Vector::Zero(draws.rows());
  return s;
}

TmcmcConfig tmcmc_config(int n_samples, int chain_length) {
  TmcmcConfig c;
  c.n_samples = n_samples;
  c.chain_length_per_sample = chain_length;
  return c;
}

// Python callables may run on worker threads.
LogDensityFn with_gil(py::function f) {
  return [f = std::move(f)](const Vector& x) {
    py::gil_scoped_acquire gil;
    return f(x).cast<double>();
  };
}

dynamics::Excitation excitation(const Vector& phi, double dt, double scale, int applied_dof) {
  dynamics::Excitation e;
  e.phi = phi;
  e.dt = dt;
  e.scale = scale;
  e.applied_dof = applied_dof;
  return e;
}

io::ExperimentConfig config(const std::filesystem::path& path, std::optional<std::uint64_t> seed) {
  io::ExperimentConfig c = io::ExperimentConfig::load(path);
  if (seed) c.override_seed(*seed);
  return c;
}

}  // namespace

PYBIND11_MODULE(_hbm, m) {
  m.doc() = "Hierarchical Bayesian model updating and reliability";

  m.def("set_num_threads", &set_num_threads, py::arg("n"));
  m.def("num_threads", &num_threads);
  m.def("derive_seed", &derive_seed, py::arg("root"), py::arg("index"));
  m.def("std_normal_cdf", &std_normal_cdf);
  m.def("std_normal_logcdf", &std_normal_logcdf);
  m.def("std_normal_quantile", &std_normal_quantile);

  m.def(
      "mvn_logpdf", [](const Vector& x, const Vector& mean, const Matrix& cov) { return GaussianNd(mean, cov).logpdf(x); },
      py::arg("x"), py::arg("mean"), py::arg("cov"));
  m.def(
      "mvn_sample",
      [](const Vector& mean, const Matrix& cov, Eigen::Index n, std::uint64_t seed) {
        Rng rng = split_stream(seed, 0);
        return GaussianNd(mean, cov).sample(rng, n);
      },
      py::arg("mean"), py::arg("cov"), py::arg("n"), py::arg("seed"));

  m.def(
      "tmcmc",
      [](py::function log_likelihood, const Vector& lower, const Vector& upper, int n_samples, int chain_length,
         std::uint64_t seed) {
        const TargetDensity t = uniform_box_target(lower, upper, with_gil(std::move(log_likelihood)));
        const TmcmcConfig cfg = tmcmc_config(n_samples, chain_length);
        SampleSet s;
        {
          py::gil_scoped_release release;
          s = tmcmc(t, cfg, seed);
        }
        return sample_dict(s);
      },
      py::arg("log_likelihood"), py::arg("lower"), py::arg("upper"), py::arg("n_samples") = 5000,
      py::arg("chain_length") = 1, py::arg("seed") = 0,
      "TMCMC under a uniform prior on [lower, upper].");

  auto lin = m.def_submodule("linear", "Linear-Gaussian hierarchical model");
  lin.def(
      "reduce_dataset",
      [](const Matrix& A, double sigma_noise, const Vector& y) {
        const auto g = linear::reduce_dataset({A, sigma_noise}, y);
        return py::make_tuple(g.theta_star, g.sigma_star);
      },
      py::arg("A"), py::arg("sigma_noise"), py::arg("y"), "Returns (theta_star, sigma_star).");
  lin.def(
      "cbm_posterior",
      [](const Matrix& A, double sigma_noise, const std::vector<Vector>& datasets) {
        const auto g = linear::cbm_posterior({A, sigma_noise}, datasets);
        return py::make_tuple(g.theta_star, g.sigma_star);
      },
      py::arg("A"), py::arg("sigma_noise"), py::arg("datasets"));

  auto summaries_of = [](const Matrix& A, double sigma_noise, const std::vector<Vector>& datasets) {
    std::vector<linear::GaussianSummary> out;
    for (const auto& y : datasets) out.push_back(linear::reduce_dataset({A, sigma_noise}, y));
    return out;
  };
  lin.def(
      "hyper_log_likelihood",
      [summaries_of](const Matrix& A, double sigma_noise, const std::vector<Vector>& datasets, const Vector& mu,
                     const Vector& sigma) {
        const linear::HyperPosterior post(summaries_of(A, sigma_noise, datasets), {});
        return post.log_likelihood({mu, sigma});
      },
      py::arg("A"), py::arg("sigma_noise"), py::arg("datasets"), py::arg("mu"), py::arg("sigma"));
  lin.def(
      "sample_hyper_posterior",
      [summaries_of](const Matrix& A, double sigma_noise, const std::vector<Vector>& datasets, int n_samples,
                     int chain_length, std::uint64_t seed) {
        const auto s = summaries_of(A, sigma_noise, datasets);
        SampleSet out;
        {
          py::gil_scoped_release release;
          out = linear::sample_hyper_posterior(s, {}, tmcmc_config(n_samples, chain_length), seed);
        }
        return sample_dict(out);
      },
      py::arg("A"), py::arg("sigma_noise"), py::arg("datasets"), py::arg("n_samples") = 5000,
      py::arg("chain_length") = 1, py::arg("seed") = 0, "Draws are rows of (mu, sigma).");
  lin.def(
      "reliability_index",
      [](const Vector& mean, const Matrix& cov, double b, const Vector& c, const Matrix& A) {
        return linear::reliability_index(mean, cov, {b, c}, {A, 1.0});
      },
      py::arg("mean"), py::arg("cov"), py::arg("b"), py::arg("c"), py::arg("A"));
  lin.def(
      "failure_curve",
      [](const Matrix& hyper_draws, const Vector& c, const std::vector<double>& thresholds, const Matrix& A) {
        return linear::failure_curve_linear(sample_set(hyper_draws), c, thresholds, {A, 1.0});
      },
      py::arg("hyper_draws"), py::arg("c"), py::arg("thresholds"), py::arg("A"));
  lin.def(
      "simulate_datasets",
      [](const Matrix& A, double sigma_noise, const Vector& mu, const Vector& sigma, int n_datasets,
         std::uint64_t seed) {
        return linear::simulate_datasets({A, sigma_noise}, {mu, sigma}, n_datasets, seed).datasets;
      },
      py::arg("A"), py::arg("sigma_noise"), py::arg("mu"), py::arg("sigma"), py::arg("n_datasets"),
      py::arg("seed"));

  auto dyn = m.def_submodule("dynamics", "3-DOF shear chain");
  dyn.def(
      "modal_frequencies", [](const Vector& theta) { return dynamics::modal_analysis(dynamics::shear_model_3dof(theta)).frequencies; },
      py::arg("theta"));
  dyn.def(
      "accelerations",
      [](const Vector& theta, const Vector& phi, double dt, double scale, int applied_dof) {
        return dynamics::integrate_accelerations(dynamics::shear_model_3dof(theta),
                                                 excitation(phi, dt, scale, applied_dof));
      },
      py::arg("theta"), py::arg("phi"), py::arg("dt") = 0.005, py::arg("scale") = 1.0, py::arg("applied_dof") = 2);
  dyn.def(
      "peak_displacement",
      [](const Vector& theta, const Vector& phi, double dt, double scale, int applied_dof, int dof) {
        return dynamics::peak_displacement(dynamics::shear_model_3dof(theta), excitation(phi, dt, scale, applied_dof),
                                           dof);
      },
      py::arg("theta"), py::arg("phi"), py::arg("dt") = 0.005, py::arg("scale") = 1.0, py::arg("applied_dof") = 2,
      py::arg("dof") = -1);

  m.def(
      "subset_simulation",
      [](py::function g, Eigen::Index dim, int n_per_level, double p0, int max_levels, std::uint64_t seed) {
        reliability::SubsetSimConfig cfg;
        cfg.n_per_level = n_per_level;
        cfg.p0 = p0;
        cfg.max_levels = max_levels;
        const LogDensityFn perf = with_gil(std::move(g));
        reliability::SubsetResult r;
        {
          py::gil_scoped_release release;
          r = reliability::subset_simulation(perf, dim, cfg, seed);
        }
        std::vector<double> levels;
        for (const auto& l : r.levels) levels.push_back(l.threshold);
        py::dict d;
        d["p_f"] = r.p_f;
        d["censored"] = r.censored;
        d["upper_bound"] = r.upper_bound;
        d["levels"] = levels;
        d["n_evaluations"] = r.n_evaluations;
        return d;
      },
      py::arg("g"), py::arg("dim"), py::arg("n_per_level") = 1000, py::arg("p0") = 0.1, py::arg("max_levels") = 12,
      py::arg("seed") = 0, "P[g(u) <= 0] for u standard normal in `dim` dimensions.");

  m.def(
      "generate",
      [](const std::filesystem::path& cfg, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
        io::cmd_generate(config(cfg, seed), out);
      },
      py::arg("config"), py::arg("out"), py::arg("seed") = py::none());
  m.def(
      "fit",
      [](const std::filesystem::path& cfg, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
        io::cmd_fit(config(cfg, seed), out, {false});
      },
      py::arg("config"), py::arg("out"), py::arg("seed") = py::none());
  m.def(
      "reliability",
      [](const std::filesystem::path& cfg, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
        io::cmd_reliability(config(cfg, seed), out);
      },
      py::arg("config"), py::arg("out"), py::arg("seed") = py::none());
  m.def(
      "report",
      [](const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out) {
        return io::cmd_report(runs, out).dump();
      },
      py::arg("runs"), py::arg("out"), "Writes out/report.json and returns it as a JSON string.");

  py::register_exception<io::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<io::PhaseError>(m, "PhaseError", PyExc_RuntimeError);
}
