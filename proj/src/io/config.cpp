#include "hbm/io/config.hpp"

#include "hbm/io/files.hpp"
#include "hbm/random.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace hbm::io {

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported by name.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }

  template <class T>
  void optional(const char* key, T& out) {
    if (obj_.contains(key)) read(key, out);
  }

  template <class T>
  void required(const char* key, T& out) {
    if (!obj_.contains(key)) throw ConfigError("config: missing required key '" + name(key) + "'");
    read(key, out);
  }

  Reader child(const char* key, bool is_required) {
    seen_.insert(key);
    if (!obj_.contains(key)) {
      if (is_required) throw ConfigError("config: missing required key '" + name(key) + "'");
      return Reader(empty(), name(key));
    }
    return Reader(obj_.at(key), name(key));
  }

  bool has(const char* key) const { return obj_.contains(key); }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("config: unknown key '" + name(item.key()) + "'");
    }
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const json& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, Vector>) {
        const auto xs = v.get<std::vector<double>>();
        out = Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) throw ConfigError("config: '" + name(key) + "' must be a non-negative integer");
        out = v.get<std::uint64_t>();
      } else if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::vector<int>>) {
        if (v.is_array()) {
          for (const auto& e : v) {
            if (!e.is_number_integer()) throw ConfigError("config: '" + name(key) + "' must hold integers");
          }
        } else if (!v.is_number_integer()) {
          throw ConfigError("config: '" + name(key) + "' must be an integer");
        }
        out = v.get<T>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("config: '" + name(key) + "' must be true or false");
        out = v.get<bool>();
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("config: '" + name(key) + "' must be a number");
        out = v.get<double>();
      } else {
        out = v.get<T>();
      }
    } catch (const json::exception& e) {
      throw ConfigError("config: bad value for '" + name(key) + "': " + e.what());
    }
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_tmcmc(Reader r, TmcmcConfig& c) {
  r.optional("n_samples", c.n_samples);
  r.optional("proposal_scale", c.proposal_scale);
  r.optional("target_cov", c.target_cov_of_weights);
  r.optional("max_stages", c.max_stages);
  r.optional("chain_length", c.chain_length_per_sample);
  r.finish();
}

json tmcmc_json(const TmcmcConfig& c) {
  return {{"n_samples", c.n_samples},
          {"proposal_scale", c.proposal_scale},
          {"target_cov", c.target_cov_of_weights},
          {"max_stages", c.max_stages},
          {"chain_length", c.chain_length_per_sample}};
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::string to_string(ExperimentKind kind) { return kind == ExperimentKind::linear ? "linear" : "dynamic"; }

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  Reader root(j, "");
  std::string kind;
  root.required("kind", kind);
  if (kind == "linear") {
    c.kind = ExperimentKind::linear;
  } else if (kind == "dynamic") {
    c.kind = ExperimentKind::dynamic;
  } else {
    throw ConfigError("config: 'kind' must be \"linear\" or \"dynamic\", got \"" + kind + "\"");
  }
  root.required("name", c.name);

  {
    Reader g = root.child("generation", true);
    GenerationConfig& gen = c.generation;
    g.required("hyper_mean", gen.hyper_mean);
    g.required("hyper_std", gen.hyper_std);
    g.required("n_datasets", gen.n_datasets);
    g.required("seed", gen.seed);
    g.optional("noise_frac", gen.noise_frac);
    if (c.kind == ExperimentKind::linear) {
      g.optional("n_data", gen.n_data);
      g.optional("design_lo", gen.design_lo);
      g.optional("design_hi", gen.design_hi);
    } else {
      g.optional("n_steps", gen.n_steps);
      g.optional("dt", gen.dt);
      g.optional("scale", gen.scale);
      g.optional("applied_dof", gen.applied_dof);
    }
    g.finish();
  }

  {
    Reader s = root.child("sampler", true);
    SamplerSettings& smp = c.sampler;
    smp.stage_one.chain_length_per_sample = 3;
    s.required("seed", smp.seed);
    read_tmcmc(s.child("hyper", false), smp.hyper);
    s.optional("run_cbm", smp.run_cbm);
    if (c.kind == ExperimentKind::linear) {
      Reader p = s.child("prior", false);
      p.optional("mu_lo", smp.linear_prior.mu_lo);
      p.optional("mu_hi", smp.linear_prior.mu_hi);
      p.optional("sigma_lo", smp.linear_prior.sigma_lo);
      p.optional("sigma_hi", smp.linear_prior.sigma_hi);
      p.finish();
    } else {
      read_tmcmc(s.child("stage_one", false), smp.stage_one);
      read_tmcmc(s.child("cbm", false), smp.cbm);
      s.optional("thinning", smp.thinning);
      Reader p = s.child("prior", false);
      auto& h = smp.dynamic_prior;
      p.optional("mu_theta_lo", h.mu_theta_lo);
      p.optional("mu_theta_hi", h.mu_theta_hi);
      p.optional("sigma_theta_lo", h.sigma_theta_lo);
      p.optional("sigma_theta_hi", h.sigma_theta_hi);
      p.optional("mu_sigma_lo", h.mu_sigma_lo);
      p.optional("mu_sigma_hi", h.mu_sigma_hi);
      p.optional("sigma_sigma_lo", h.sigma_sigma_lo);
      p.optional("sigma_sigma_hi", h.sigma_sigma_hi);
      p.finish();
      for (auto [key, o] : {std::pair{"stage_one_prior", &smp.stage_one_prior}, std::pair{"cbm_prior", &smp.cbm_prior}}) {
        Reader q = s.child(key, false);
        q.optional("theta_lo", o->theta_lo);
        q.optional("theta_hi", o->theta_hi);
        q.optional("sigma_lo", o->sigma_lo);
        q.optional("sigma_hi", o->sigma_hi);
        q.finish();
      }
    }
    s.finish();
  }

  {
    Reader r = root.child("reliability", true);
    ReliabilitySettings& rel = c.reliability;
    r.required("seed", rel.seed);
    r.optional("n_datasets", rel.n_datasets);
    r.optional("grid_points", rel.grid_points);
    if (c.kind == ExperimentKind::linear) {
      r.optional("c_index", rel.linear_c_index);
      r.optional("p_hi", rel.linear_p_hi);
      r.optional("p_lo", rel.p_lo);
    } else {
      Reader ss = r.child("subset", false);
      ss.optional("n_per_level", rel.subset.n_per_level);
      ss.optional("p0", rel.subset.p0);
      ss.optional("max_levels", rel.subset.max_levels);
      ss.optional("proposal_std", rel.subset.proposal_std);
      ss.finish();
      r.optional("p_lo", rel.p_lo);
      r.optional("n_crude", rel.n_crude);
      r.optional("m_hyper", rel.m_hyper);
      r.optional("predictive_draws", rel.predictive_draws);
      r.optional("histogram_bins", rel.histogram_bins);
      r.optional("dof", rel.dof);
      r.optional("n_phi", rel.n_phi);
      r.optional("input_scale", rel.input_scale);
    }
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  const GenerationConfig& g = generation;
  json gen = {{"hyper_mean", to_std(g.hyper_mean)},
              {"hyper_std", to_std(g.hyper_std)},
              {"n_datasets", g.n_datasets},
              {"noise_frac", g.noise_frac},
              {"seed", g.seed}};
  json smp = {{"seed", sampler.seed}, {"hyper", tmcmc_json(sampler.hyper)}, {"run_cbm", sampler.run_cbm}};
  json rel = {{"seed", reliability.seed}, {"n_datasets", reliability.n_datasets}, {"grid_points", reliability.grid_points},
              {"p_lo", reliability.p_lo}};
  if (kind == ExperimentKind::linear) {
    gen["n_data"] = g.n_data;
    gen["design_lo"] = g.design_lo;
    gen["design_hi"] = g.design_hi;
    const auto& p = sampler.linear_prior;
    smp["prior"] = {{"mu_lo", p.mu_lo}, {"mu_hi", p.mu_hi}, {"sigma_lo", p.sigma_lo}, {"sigma_hi", p.sigma_hi}};
    rel["c_index"] = reliability.linear_c_index;
    rel["p_hi"] = reliability.linear_p_hi;
  } else {
    gen["n_steps"] = g.n_steps;
    gen["dt"] = g.dt;
    gen["scale"] = g.scale;
    gen["applied_dof"] = g.applied_dof;
    smp["stage_one"] = tmcmc_json(sampler.stage_one);
    smp["cbm"] = tmcmc_json(sampler.cbm);
    smp["thinning"] = sampler.thinning;
    const auto& h = sampler.dynamic_prior;
    smp["prior"] = {{"mu_theta_lo", h.mu_theta_lo},       {"mu_theta_hi", h.mu_theta_hi},
                    {"sigma_theta_lo", h.sigma_theta_lo}, {"sigma_theta_hi", h.sigma_theta_hi},
                    {"mu_sigma_lo", h.mu_sigma_lo},       {"mu_sigma_hi", h.mu_sigma_hi},
                    {"sigma_sigma_lo", h.sigma_sigma_lo}, {"sigma_sigma_hi", h.sigma_sigma_hi}};
    for (auto [key, o] : {std::pair{"stage_one_prior", &sampler.stage_one_prior}, std::pair{"cbm_prior", &sampler.cbm_prior}}) {
      smp[key] = {{"theta_lo", o->theta_lo}, {"theta_hi", o->theta_hi}, {"sigma_lo", o->sigma_lo}, {"sigma_hi", o->sigma_hi}};
    }
    const auto& ss = reliability.subset;
    rel["subset"] = {{"n_per_level", ss.n_per_level},
                     {"p0", ss.p0},
                     {"max_levels", ss.max_levels},
                     {"proposal_std", ss.proposal_std}};
    rel["n_crude"] = reliability.n_crude;
    rel["m_hyper"] = reliability.m_hyper;
    rel["predictive_draws"] = reliability.predictive_draws;
    rel["histogram_bins"] = reliability.histogram_bins;
    rel["dof"] = reliability.dof;
    rel["n_phi"] = reliability.n_phi;
    rel["input_scale"] = reliability.input_scale;
  }
  return {{"kind", to_string(kind)}, {"name", name}, {"generation", gen}, {"sampler", smp}, {"reliability", rel}};
}

std::string ExperimentConfig::hash() const { return sha256_hex(to_json().dump()); }

int ExperimentConfig::max_datasets() const {
  return *std::max_element(generation.n_datasets.begin(), generation.n_datasets.end());
}

int ExperimentConfig::reliability_datasets() const {
  return reliability.n_datasets > 0 ? reliability.n_datasets : max_datasets();
}

void ExperimentConfig::override_seed(std::uint64_t seed) {
  generation.seed = derive_seed(seed, 0);
  sampler.seed = derive_seed(seed, 1);
  reliability.seed = derive_seed(seed, 2);
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (name.empty() || name.find_first_of("/\\,") != std::string::npos) {
    fail("'name' must be non-empty and free of '/', '\\' and ','");
  }
  const GenerationConfig& g = generation;
  if (g.hyper_mean.size() == 0 || g.hyper_mean.size() != g.hyper_std.size()) {
    fail("'generation.hyper_mean' and 'generation.hyper_std' must be non-empty and of equal length");
  }
  if (!(g.hyper_std.array() > 0.0).all()) fail("'generation.hyper_std' must be > 0");
  if (g.n_datasets.empty()) fail("'generation.n_datasets' must be non-empty");
  for (int n : g.n_datasets) {
    if (n < 1) fail("'generation.n_datasets' entries must be >= 1");
  }
  if (!(g.noise_frac >= 0.0)) fail("'generation.noise_frac' must be >= 0");
  if (kind == ExperimentKind::linear) {
    if (!(g.noise_frac > 0.0)) fail("'generation.noise_frac' must be > 0 for linear experiments");
    if (g.n_data.empty()) fail("'generation.n_data' must be non-empty");
    for (int n : g.n_data) {
      if (n < static_cast<int>(g.hyper_mean.size())) fail("'generation.n_data' entries must be at least the parameter count");
    }
    if (!(g.design_lo < g.design_hi)) fail("'generation.design_lo' must be below 'design_hi'");
    if (reliability.linear_c_index < 0 || reliability.linear_c_index >= *std::min_element(g.n_data.begin(), g.n_data.end())) {
      fail("'reliability.c_index' out of range");
    }
    if (!(reliability.p_lo > 0.0 && reliability.p_lo < reliability.linear_p_hi && reliability.linear_p_hi < 1.0)) {
      fail("'reliability.p_lo' and 'p_hi' must satisfy 0 < p_lo < p_hi < 1");
    }
  } else {
    if (g.hyper_mean.size() != 3) fail("dynamic experiments use the 3-storey model: three hyper means required");
    if (!(g.hyper_mean.array() > 0.0).all()) fail("'generation.hyper_mean' must be > 0");
    if (g.n_steps < 2) fail("'generation.n_steps' must be >= 2");
    if (!(g.dt > 0.0)) fail("'generation.dt' must be > 0");
    if (g.applied_dof < 0 || g.applied_dof >= 3) fail("'generation.applied_dof' must be 0, 1 or 2");
    if (sampler.thinning < 1) fail("'sampler.thinning' must be >= 1");
    try {
      sampler.stage_one.validate();
      sampler.cbm.validate();
      reliability.subset.validate();
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    const ReliabilitySettings& r = reliability;
    if (r.m_hyper < 1) fail("'reliability.m_hyper' must be >= 1");
    if (r.predictive_draws < 2) fail("'reliability.predictive_draws' must be >= 2");
    if (r.histogram_bins < 1) fail("'reliability.histogram_bins' must be >= 1");
    if (r.n_crude < 2) fail("'reliability.n_crude' must be >= 2");
    if (r.dof < -1 || r.dof >= 3) fail("'reliability.dof' must be -1, 0, 1 or 2");
    if (r.n_phi < 1) fail("'reliability.n_phi' must be >= 1");
    if (!(r.p_lo > 0.0 && r.p_lo < 0.5)) fail("'reliability.p_lo' must lie in (0, 0.5)");
  }
  try {
    sampler.hyper.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (reliability.grid_points < 2) fail("'reliability.grid_points' must be >= 2");
  if (reliability.n_datasets < 0 ||
      (reliability.n_datasets > 0 &&
       std::find(g.n_datasets.begin(), g.n_datasets.end(), reliability.n_datasets) == g.n_datasets.end())) {
    fail("'reliability.n_datasets' must be 0 or one of 'generation.n_datasets'");
  }
}

}  // namespace hbm::io
