#pragma once

#include "hbm/gauss.hpp"
#include "hbm/random.hpp"

#include <cstdint>
#include <vector>

namespace hbm::dynamics {

inline constexpr int kMaxDof = 8;

/// Fixed-base lumped-mass shear chain. Story i couples mass i-1 (or the
/// ground) to mass i with stiffness k0 * theta_i. Every mode carries the
/// same damping ratio zeta.
struct ShearModel {
  double m0 = 1.0;
  double k0 = 1800.0;
  Vector theta = Vector::Ones(3);
  double zeta = 0.02;

  int n_dof() const { return static_cast<int>(theta.size()); }
  void validate() const;

  Matrix mass() const;
  Matrix stiffness() const;
};

/// The 3-DOF configuration used throughout (m0 = 1 kg, k0 = 1800 N/m).
ShearModel shear_model_3dof(const Vector& theta, double zeta = 0.02);

struct ModalData {
  Vector frequencies;  // rad/s, ascending
  Matrix shapes;       // columns mass-normalised: Phi^T M Phi = I
};

ModalData modal_analysis(const ShearModel& model);

/// C = M Phi diag(2 zeta omega) Phi^T M.
Matrix damping_matrix(const ShearModel& model);

/// Point force scale * phi[k] at `applied_dof`, held over step k.
struct Excitation {
  Vector phi;
  double dt = 0.005;
  double scale = 1.0;
  int applied_dof = 2;

  Eigen::Index n_steps() const { return phi.size(); }
  void validate(int n_dof) const;
};

/// n_dof x n_steps histories sampled at t_k = k dt.
struct ResponseHistory {
  Matrix displacements;
  Matrix velocities;
  Matrix accelerations;
  double dt = 0.0;
};

struct InitialState {
  Vector displacement;
  Vector velocity;
};

/// Newmark average-acceleration (gamma = 1/2, beta = 1/4) from rest, or from
/// the given initial state.
ResponseHistory integrate(const ShearModel& model, const Excitation& exc);
ResponseHistory integrate(const ShearModel& model, const Excitation& exc, const InitialState& init);

/// Accelerations only (n_dof x n_steps); same integrator.
Matrix integrate_accelerations(const ShearModel& model, const Excitation& exc);

/// max over t of |x_dof(t)|, or over all DOFs when dof < 0. No history is stored.
double peak_displacement(const ShearModel& model, const Excitation& exc, int dof = -1);

/// Root-mean-square of each row.
Vector channel_rms(const Matrix& history);

struct DynamicDataset {
  Matrix accelerations;  // noisy, n_dof x n_steps
  Matrix clean;          // noise-free response
  Vector truth;          // generating theta; diagnostics only
};

/// theta_i ~ N(mu, diag(sigma^2)) truncated to theta > 0; per-channel noise
/// std = noise_frac * RMS(clean channel). Dataset i uses split_stream(seed, i).
std::vector<DynamicDataset> generate_datasets(const HyperParams& generation, int n_datasets,
                                              const Excitation& exc, double noise_frac, std::uint64_t seed,
                                              double zeta = 0.02);

}  // namespace hbm::dynamics
