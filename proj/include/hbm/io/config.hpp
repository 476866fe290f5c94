#pragma once

#include "hbm/linear_hbm.hpp"
#include "hbm/samplers.hpp"
#include "hbm/subset_simulation.hpp"
#include "hbm/two_stage.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace hbm::io {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { linear, dynamic };

std::string to_string(ExperimentKind kind);

struct GenerationConfig {
  Vector hyper_mean;
  Vector hyper_std;
  std::vector<int> n_datasets;  // N_D settings; datasets are nested
  std::vector<int> n_data{500};  // linear: N_d settings, nested columns of A
  double design_lo = 1.0;
  double design_hi = 5.0;
  int n_steps = 1000;  // dynamic: N_t
  double dt = 0.005;
  double scale = 1.0;
  int applied_dof = 2;
  double noise_frac = 0.02;
  std::uint64_t seed = 0;
};

struct SamplerSettings {
  TmcmcConfig hyper;      // linear hyper posterior, dynamic stage two
  TmcmcConfig stage_one;  // dynamic only
  TmcmcConfig cbm;        // dynamic pooled posterior
  int thinning = 1;
  bool run_cbm = true;
  linear::HyperBox linear_prior;
  two_stage::DynamicHyperBox dynamic_prior;
  two_stage::StageOnePrior stage_one_prior;
  two_stage::StageOnePrior cbm_prior{0.5, 1.5, 1e-4, 1.0};  // pooled posterior
  std::uint64_t seed = 0;
};

struct ReliabilitySettings {
  reliability::SubsetSimConfig subset;
  int n_datasets = 0;  // which N_D to use; 0 = the largest
  int grid_points = 20;
  double p_lo = 1e-5;
  int n_crude = 1000;
  int m_hyper = 100;
  int predictive_draws = 10000;
  int histogram_bins = 50;
  int dof = -1;
  int n_phi = 1000;
  double input_scale = 1.0;
  int linear_c_index = 0;  // c = e_j
  double linear_p_hi = 0.5;
  std::uint64_t seed = 0;
};

/// Parsed experiment description. Unknown keys are rejected; seeds and the
/// fields without a documented default must be present.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::linear;
  std::string name;
  GenerationConfig generation;
  SamplerSettings sampler;
  ReliabilitySettings reliability;

  static ExperimentConfig from_json(const json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  json to_json() const;
  /// SHA-256 of the canonical JSON form.
  std::string hash() const;
  int n_theta() const { return static_cast<int>(generation.hyper_mean.size()); }
  int max_datasets() const;
  int reliability_datasets() const;
  /// Replaces every phase seed by derive_seed(seed, phase).
  void override_seed(std::uint64_t seed);
  void validate() const;
};

}  // namespace hbm::io
