#include "hbm/shear_model.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace hbm::dynamics {

namespace {

constexpr double kGamma = 0.5;
constexpr double kBeta = 0.25;

// Fixed sizes for the common 3-DOF case, bounded dynamic sizes otherwise.
template <int N>
struct Dims {
  static constexpr int kState = N == Eigen::Dynamic ? Eigen::Dynamic : 3 * N;
  static constexpr int kMaxN = N == Eigen::Dynamic ? kMaxDof : N;
  using StateVec = Eigen::Matrix<double, kState, 1, 0, 3 * kMaxN, 1>;
  using StateMat = Eigen::Matrix<double, kState, kState, 0, 3 * kMaxN, 3 * kMaxN>;
  using DofVec = Eigen::Matrix<double, N, 1, 0, kMaxN, 1>;
  using DofMat = Eigen::Matrix<double, N, N, 0, kMaxN, kMaxN>;
};

// Newmark average acceleration as a linear recurrence on s = (x, v, a):
// s_{k+1} = T s_k + B f_{k+1}, with f a unit force at the loaded DOF.
template <int N>
struct Recurrence {
  using D = Dims<N>;
  int n = 0;
  typename D::StateMat transition;
  typename D::StateVec load;
  typename D::DofMat mass_inv;
  typename D::DofMat damping;
  typename D::DofMat stiffness;
};

template <int N>
Recurrence<N> build_recurrence(const ShearModel& model, double dt, int applied_dof) {
  using D = Dims<N>;
  using DofMat = typename D::DofMat;
  using DofVec = typename D::DofVec;
  using StateVec = typename D::StateVec;
  const int n = model.n_dof();
  const DofMat m = model.mass();
  const DofMat k = model.stiffness();
  const DofMat c = damping_matrix(model);

  const double a0 = 1.0 / (kBeta * dt * dt);
  const double a1 = kGamma / (kBeta * dt);
  const double a2 = 1.0 / (kBeta * dt);
  const double a3 = 1.0 / (2.0 * kBeta) - 1.0;
  const double a4 = kGamma / kBeta - 1.0;
  const double a5 = dt * (kGamma / (2.0 * kBeta) - 1.0);

  const DofMat k_eff = k + a1 * c + a0 * m;
  const Eigen::LLT<DofMat> solver(k_eff);

  auto step = [&](const StateVec& s, const DofVec& f) {
    const DofVec x = s.segment(0, n);
    const DofVec v = s.segment(n, n);
    const DofVec a = s.segment(2 * n, n);
    const DofVec rhs = f + m * (a0 * x + a2 * v + a3 * a) + c * (a1 * x + a4 * v + a5 * a);
    const DofVec x1 = solver.solve(rhs);
    const DofVec acc1 = a0 * (x1 - x) - a2 * v - a3 * a;
    const DofVec v1 = v + dt * ((1.0 - kGamma) * a + kGamma * acc1);
    StateVec out(3 * n);
    out << x1, v1, acc1;
    return out;
  };

  Recurrence<N> r;
  r.n = n;
  r.transition.resize(3 * n, 3 * n);
  const DofVec no_force = DofVec::Zero(n);
  for (int j = 0; j < 3 * n; ++j) {
    StateVec e = StateVec::Zero(3 * n);
    e(j) = 1.0;
    r.transition.col(j) = step(e, no_force);
  }
  DofVec unit = DofVec::Zero(n);
  unit(applied_dof) = 1.0;
  r.load = step(StateVec::Zero(3 * n), unit);
  r.mass_inv = m.inverse();
  r.damping = c;
  r.stiffness = k;
  return r;
}

// visit(t, x, v, a) for every sample t_k = k dt.
template <int N, class Visitor>
void run_fixed(const ShearModel& model, const Excitation& exc, const InitialState* init, Visitor& visit) {
  using D = Dims<N>;
  using DofVec = typename D::DofVec;
  using StateVec = typename D::StateVec;
  const Recurrence<N> r = build_recurrence<N>(model, exc.dt, exc.applied_dof);
  const int n = r.n;

  StateVec s = StateVec::Zero(3 * n);
  DofVec f0 = DofVec::Zero(n);
  f0(exc.applied_dof) = exc.scale * exc.phi(0);
  if (init != nullptr) {
    if (init->displacement.size() != n || init->velocity.size() != n) {
      throw std::invalid_argument("integrate: initial state has wrong dimension");
    }
    const DofVec x0 = init->displacement;
    const DofVec v0 = init->velocity;
    s.segment(0, n) = x0;
    s.segment(n, n) = v0;
    s.segment(2 * n, n) = r.mass_inv * (f0 - r.damping * v0 - r.stiffness * x0);
  } else {
    s.segment(2 * n, n) = r.mass_inv * f0;
  }
  visit(Eigen::Index{0}, s.segment(0, n), s.segment(n, n), s.segment(2 * n, n));

  StateVec next(3 * n);
  for (Eigen::Index t = 1; t < exc.n_steps(); ++t) {
    next.noalias() = r.transition * s;
    next += (exc.scale * exc.phi(t)) * r.load;
    s.swap(next);
    visit(t, s.segment(0, n), s.segment(n, n), s.segment(2 * n, n));
  }
}

template <class Visitor>
void run(const ShearModel& model, const Excitation& exc, const InitialState* init, Visitor&& visit) {
  model.validate();
  exc.validate(model.n_dof());
  if (model.n_dof() == 3) {
    run_fixed<3>(model, exc, init, visit);
  } else {
    run_fixed<Eigen::Dynamic>(model, exc, init, visit);
  }
}

}  // namespace

void ShearModel::validate() const {
  if (theta.size() < 1 || theta.size() > kMaxDof) {
    throw std::invalid_argument("ShearModel: need 1.." + std::to_string(kMaxDof) + " stories");
  }
  if (!(theta.array() > 0.0).all() || !theta.allFinite()) {
    throw std::invalid_argument("ShearModel: stiffness multipliers must be finite and > 0");
  }
  if (!(m0 > 0.0) || !(k0 > 0.0)) throw std::invalid_argument("ShearModel: m0 and k0 must be > 0");
  if (!(zeta >= 0.0 && zeta < 1.0)) throw std::invalid_argument("ShearModel: zeta must lie in [0, 1)");
}

Matrix ShearModel::mass() const { return m0 * Matrix::Identity(n_dof(), n_dof()); }

Matrix ShearModel::stiffness() const {
  const int n = n_dof();
  Matrix k = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double ki = k0 * theta(i);
    k(i, i) += ki;
    if (i > 0) {
      k(i - 1, i - 1) += ki;
      k(i - 1, i) -= ki;
      k(i, i - 1) -= ki;
    }
  }
  return k;
}

ShearModel shear_model_3dof(const Vector& theta, double zeta) {
  ShearModel m;
  m.theta = theta;
  m.zeta = zeta;
  m.validate();
  if (theta.size() != 3) throw std::invalid_argument("shear_model_3dof: theta must have 3 entries");
  return m;
}

ModalData modal_analysis(const ShearModel& model) {
  model.validate();
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(model.stiffness(), model.mass());
  if (solver.info() != Eigen::Success || (solver.eigenvalues().array() <= 0.0).any()) {
    throw std::domain_error("modal_analysis: stiffness matrix is not positive definite");
  }
  return {solver.eigenvalues().cwiseSqrt(), solver.eigenvectors()};
}

Matrix damping_matrix(const ShearModel& model) {
  const ModalData modes = modal_analysis(model);
  const Matrix m = model.mass();
  const Vector modal = 2.0 * model.zeta * modes.frequencies;
  Matrix c = m * modes.shapes * modal.asDiagonal() * modes.shapes.transpose() * m;
  return 0.5 * (c + c.transpose());
}

void Excitation::validate(int n_dof) const {
  if (phi.size() < 1) throw std::invalid_argument("Excitation: need at least one step");
  if (!(dt > 0.0)) throw std::invalid_argument("Excitation: dt must be > 0");
  if (applied_dof < 0 || applied_dof >= n_dof) throw std::invalid_argument("Excitation: applied_dof out of range");
  if (!phi.allFinite() || !std::isfinite(scale)) throw std::invalid_argument("Excitation: non-finite excitation");
}

ResponseHistory integrate(const ShearModel& model, const Excitation& exc) {
  ResponseHistory h;
  h.dt = exc.dt;
  const int n = model.n_dof();
  h.displacements.resize(n, exc.n_steps());
  h.velocities.resize(n, exc.n_steps());
  h.accelerations.resize(n, exc.n_steps());
  run(model, exc, nullptr, [&](Eigen::Index t, const auto& x, const auto& v, const auto& a) {
    h.displacements.col(t) = x;
    h.velocities.col(t) = v;
    h.accelerations.col(t) = a;
  });
  return h;
}

ResponseHistory integrate(const ShearModel& model, const Excitation& exc, const InitialState& init) {
  ResponseHistory h;
  h.dt = exc.dt;
  const int n = model.n_dof();
  h.displacements.resize(n, exc.n_steps());
  h.velocities.resize(n, exc.n_steps());
  h.accelerations.resize(n, exc.n_steps());
  run(model, exc, &init, [&](Eigen::Index t, const auto& x, const auto& v, const auto& a) {
    h.displacements.col(t) = x;
    h.velocities.col(t) = v;
    h.accelerations.col(t) = a;
  });
  return h;
}

Matrix integrate_accelerations(const ShearModel& model, const Excitation& exc) {
  Matrix acc(model.n_dof(), exc.n_steps());
  run(model, exc, nullptr,
      [&](Eigen::Index t, const auto&, const auto&, const auto& a) { acc.col(t) = a; });
  return acc;
}

double peak_displacement(const ShearModel& model, const Excitation& exc, int dof) {
  if (dof >= model.n_dof()) throw std::invalid_argument("peak_displacement: dof out of range");
  double peak = 0.0;
  run(model, exc, nullptr, [&](Eigen::Index, const auto& x, const auto&, const auto&) {
    const double v = dof < 0 ? x.cwiseAbs().maxCoeff() : std::abs(x(dof));
    if (v > peak) peak = v;
  });
  return peak;
}

Vector channel_rms(const Matrix& history) {
  return (history.array().square().rowwise().mean()).sqrt().matrix();
}

std::vector<DynamicDataset> generate_datasets(const HyperParams& generation, int n_datasets,
                                              const Excitation& exc, double noise_frac, std::uint64_t seed,
                                              double zeta) {
  if (n_datasets < 1) throw std::invalid_argument("generate_datasets: n_datasets must be >= 1");
  if (!(noise_frac >= 0.0)) throw std::invalid_argument("generate_datasets: noise_frac must be >= 0");
  std::vector<DynamicDataset> out(static_cast<std::size_t>(n_datasets));
  for (int i = 0; i < n_datasets; ++i) {
    Rng rng = split_stream(seed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal(0.0, 1.0);

    Vector theta(generation.mu.size());
    long tries = 0;
    do {
      if (++tries > 1000000) {
        throw std::runtime_error("generate_datasets: truncation to theta > 0 rejected 1e6 draws");
      }
      for (Eigen::Index k = 0; k < theta.size(); ++k) theta(k) = generation.mu(k) + generation.sigma(k) * normal(rng);
    } while (!(theta.array() > 0.0).all());

    ShearModel model;
    model.theta = theta;
    model.zeta = zeta;
    DynamicDataset& ds = out[static_cast<std::size_t>(i)];
    ds.truth = theta;
    ds.clean = integrate_accelerations(model, exc);
    ds.accelerations = ds.clean;
    if (noise_frac > 0.0) {
      const Vector rms = channel_rms(ds.clean);
      for (Eigen::Index c = 0; c < ds.clean.rows(); ++c)
        for (Eigen::Index t = 0; t < ds.clean.cols(); ++t) ds.accelerations(c, t) += noise_frac * rms(c) * normal(rng);
    }
  }
  return out;
}

}  // namespace hbm::dynamics
