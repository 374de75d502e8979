#pragma once

// Backward-Euler integration of the relaxed Cahn-Hilliard problem, its Yosida
// regularization and the limit nonlinear diffusion problem.
//
// Every step solves, for the unknown u,
//
//   (u - u_prev)/tau + A mu(u) = s,
//   mu(u) = visc (u - u_prev)/tau + eps A u + beta_lambda(u) + pi_eps(u) - f,
//
// with A = -Delta_h. The regularized problem uses visc = lambda, s = 0; the limit
// problem uses visc = eps = 0, no perturbation, f = 0 and the direct source
// s = g + boundary flux. Newton corrections are projected onto zero mean, so the
// discrete mass is conserved exactly at every iterate.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "chlimit/data.hpp"
#include "chlimit/error.hpp"
#include "chlimit/field.hpp"
#include "chlimit/graphs.hpp"

namespace chlimit {

struct SolverSettings {
  double lambda_cap = 1e-6;     // lambda = min(lambda_cap, kappa * eps) for relaxed runs
  double kappa = 0.1;
  double limit_lambda = 1e-8;   // Yosida parameter realizing beta in the limit problem
  double residual_tol = 1e-10;  // V*-norm of the step residual
  int max_newton = 50;
  double tau_min = 0.0;         // smallest substep after halving; 0 means tau / 1024
};

struct ProblemSpec {
  MonotoneGraph graph = MonotoneGraph::linear();
  Perturbation perturbation;
  SourceData src;
  InitialData init;
  double eps = 0.0;     // 0 selects the limit problem
  double lambda = 0.0;  // 0 selects the lambda schedule for relaxed runs
  double tau = 1e-3;
  double T = 0.1;
  Grid grid;
  SolverSettings settings;

  void validate() const {
    if (!(tau > 0.0)) throw ParameterError("time step tau must be positive");
    if (!(T >= tau)) throw ParameterError("final time T must be at least tau");
    if (!(eps >= 0.0 && eps <= 1.0)) throw ParameterError("eps must lie in [0, 1]");
    if (!(lambda >= 0.0)) throw ParameterError("lambda must be nonnegative");
    if (eps == 0.0 && lambda > 0.0) {
      throw ParameterError("limit problem (eps = 0) fixes the lambda floor internally; lambda must be 0");
    }
    if (!(init.u0.grid() == grid)) throw ParameterError("initial data live on a different grid");
    for (const auto& s : src.samples()) {
      if (!(s.g.grid() == grid)) throw ParameterError("source data live on a different grid");
    }
    validate_initial(init, graph);
  }
};

struct StepResult {
  Field u, mu, xi;
  int newton_iters = 0;
  double residual = 0.0;
};

struct StepDiagnostics {
  double t = 0.0;
  double mass = 0.0;
  double norm_H_u = 0.0;
  double grad_energy = 0.0;  // eps |grad u|^2
  double betahat_int = 0.0;  // h sum primitive_lambda(u)
  double norm_V_mu = 0.0;
  double norm_H_xi = 0.0;
  int newton_iters = 0;
};

struct Trajectory {
  double eps = 0.0;
  double lambda = 0.0;  // Yosida parameter actually used
  double tau = 0.0;
  double m0 = 0.0;
  std::vector<double> times;
  std::vector<Field> u, mu, xi;
  std::vector<StepDiagnostics> diagnostics;

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }

  /// max_k |m(u_k) - m0| relative to max(|m0|, |u_0|_inf).
  double mass_drift() const {
    if (u.empty()) return 0.0;
    double scale = std::max(std::abs(m0), u.front().max_abs());
    if (scale == 0.0) scale = 1.0;
    double drift = 0.0;
    for (const auto& d : diagnostics) drift = std::max(drift, std::abs(d.mass - m0));
    return drift / scale;
  }
};

namespace detail {

/// Newton solver for one implicit step, reusable across steps of one run.
class ImplicitStepper {
 public:
  struct Params {
    double yosida_lambda = 1e-8;
    double visc = 0.0;
    double eps = 0.0;
    bool perturbed = false;
  };

  ImplicitStepper(const MonotoneGraph& graph, const Perturbation& pert, const Grid& grid, Params params,
                  const SolverSettings& settings)
      : graph_(graph), pert_(pert), grid_(grid), params_(params), settings_(settings), inverse_(grid) {
    build_pattern();
  }

  const Params& params() const { return params_; }

  double xi_of(double r) const { return yosida(graph_, params_.yosida_lambda, r); }

  /// Solves the step from u_prev over dt with lift f (subtracted inside mu) and direct source s.
  StepResult solve(const Field& u_prev, const Field& f, const Field& source, double dt) {
    const std::size_t n = grid_.cells;
    StepResult out;
    Field u = u_prev;
    double phi = residual_norm(u, u_prev, f, source, dt);
    const double step_floor = 1e-13;
    int it = 0;
    bool converged = phi <= settings_.residual_tol;
    std::vector<double> rhs(n);
    while (!converged && it < settings_.max_newton) {
      ++it;
      const Field residual = residual_field(u, u_prev, f, source, dt);
      assemble(u, dt);
      solver_.factorize(jacobian_);
      if (solver_.info() != Eigen::Success) {
        throw NumericalError("Newton step: Jacobian factorization failed", phi);
      }
      Eigen::Map<const Eigen::VectorXd> r(residual.values().data(), static_cast<Eigen::Index>(n));
      Eigen::VectorXd delta = solver_.solve(-r);
      if (solver_.info() != Eigen::Success || !delta.allFinite()) {
        throw NumericalError("Newton step: linear solve failed", phi);
      }
      delta.array() -= delta.mean();
      const double delta_norm = delta.lpNorm<Eigen::Infinity>();
      const double u_scale = 1.0 + u.max_abs();

      double alpha = 1.0;
      Field trial(grid_);
      double phi_trial = 0.0;
      bool accepted = false;
      for (int back = 0; back < 40; ++back) {
        for (std::size_t i = 0; i < n; ++i) trial[i] = u[i] + alpha * delta[static_cast<Eigen::Index>(i)];
        phi_trial = residual_norm(trial, u_prev, f, source, dt);
        if (std::isfinite(phi_trial) && phi_trial < (1.0 - 1e-4 * alpha) * phi) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        // No descent left: either the residual sits at its rounding floor or Newton stalled.
        if (delta_norm <= 1e-9 * u_scale) {
          converged = true;
          break;
        }
        std::ostringstream msg;
        msg << "Newton line search failed after " << it << " iterations, residual " << phi;
        throw NumericalError(msg.str(), phi);
      }
      u = std::move(trial);
      phi = phi_trial;
      converged = phi <= settings_.residual_tol || alpha * delta_norm <= step_floor * u_scale;
    }
    if (!converged) {
      std::ostringstream msg;
      msg << "Newton did not converge in " << settings_.max_newton << " iterations, residual " << phi;
      throw NumericalError(msg.str(), phi);
    }
    out.u = u;
    out.mu = mu_of(u, u_prev, f, dt);
    out.xi = Field(grid_);
    for (std::size_t i = 0; i < n; ++i) out.xi[i] = xi_of(u[i]);
    out.newton_iters = it;
    out.residual = phi;
    return out;
  }

  Field mu_of(const Field& u, const Field& u_prev, const Field& f, double dt) const {
    const std::size_t n = grid_.cells;
    Field mu(grid_);
    Field au;
    if (params_.eps > 0.0) au = -1.0 * laplacian_neumann(u);
    for (std::size_t i = 0; i < n; ++i) {
      double v = xi_of(u[i]) - f[i];
      if (params_.visc > 0.0) v += params_.visc * (u[i] - u_prev[i]) / dt;
      if (params_.eps > 0.0) v += params_.eps * au[i];
      if (params_.perturbed) v += perturbation_value(pert_, params_.eps, u[i]);
      mu[i] = v;
    }
    return mu;
  }

  Field residual_field(const Field& u, const Field& u_prev, const Field& f, const Field& source, double dt) const {
    const Field mu = mu_of(u, u_prev, f, dt);
    Field r = (1.0 / dt) * (u - u_prev);
    r -= laplacian_neumann(mu);
    r -= source;
    return r;
  }

  /// V*-norm of the residual, assembled as grad(N((u - u_prev)/dt - s) + mu) to
  /// avoid applying N to A mu.
  double residual_norm(const Field& u, const Field& u_prev, const Field& f, const Field& source, double dt) const {
    Field rate = (1.0 / dt) * (u - u_prev);
    rate -= source;
    const double mean_part = mean(rate);
    Field v = inverse_.apply_projected(rate);
    v += mu_of(u, u_prev, f, dt);
    return std::sqrt(gradient_energy(v) + mean_part * mean_part);
  }

 private:
  // A = -Delta_h entries
  double a_entry(std::size_t i, std::size_t j) const {
    const std::size_t n = grid_.cells;
    const double inv_h2 = 1.0 / (grid_.spacing() * grid_.spacing());
    if (i == j) return (i == 0 || i + 1 == n ? 1.0 : 2.0) * inv_h2;
    if (i + 1 == j || j + 1 == i) return -inv_h2;
    return 0.0;
  }

  void build_pattern() {
    const std::size_t n = grid_.cells;
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t lo = j >= 2 ? j - 2 : 0;
      const std::size_t hi = std::min(n - 1, j + 2);
      for (std::size_t i = lo; i <= hi; ++i) {
        triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), 1.0);
      }
    }
    jacobian_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    jacobian_.setFromTriplets(triplets.begin(), triplets.end());
    jacobian_.makeCompressed();
    a2_.assign(jacobian_.nonZeros(), 0.0);
    a_.assign(jacobian_.nonZeros(), 0.0);
    std::size_t k = 0;
    for (int j = 0; j < jacobian_.outerSize(); ++j) {
      for (Eigen::SparseMatrix<double>::InnerIterator itr(jacobian_, j); itr; ++itr, ++k) {
        const auto i = static_cast<std::size_t>(itr.row());
        const auto jj = static_cast<std::size_t>(j);
        a_[k] = a_entry(i, jj);
        double s = 0.0;
        const std::size_t lo = std::max(i, jj) >= 1 ? std::max(i, jj) - 1 : 0;
        const std::size_t hi = std::min(n - 1, std::min(i, jj) + 1);
        for (std::size_t m = lo; m <= hi; ++m) s += a_entry(i, m) * a_entry(m, jj);
        a2_[k] = s;
      }
    }
    solver_.analyzePattern(jacobian_);
  }

  // J = I/dt + A diag(d) + eps A^2 with d = visc/dt + beta_lambda' + pi'
  void assemble(const Field& u, double dt) {
    const std::size_t n = grid_.cells;
    std::vector<double> d(n);
    for (std::size_t j = 0; j < n; ++j) {
      double v = yosida_slope(graph_, params_.yosida_lambda, u[j]);
      if (params_.visc > 0.0) v += params_.visc / dt;
      if (params_.perturbed) v += perturbation_slope(pert_, params_.eps, u[j]);
      d[j] = v;
    }
    double* values = jacobian_.valuePtr();
    std::size_t k = 0;
    for (int j = 0; j < jacobian_.outerSize(); ++j) {
      for (Eigen::SparseMatrix<double>::InnerIterator itr(jacobian_, j); itr; ++itr, ++k) {
        const auto i = static_cast<std::size_t>(itr.row());
        double v = a_[k] * d[static_cast<std::size_t>(j)] + params_.eps * a2_[k];
        if (i == static_cast<std::size_t>(j)) v += 1.0 / dt;
        values[k] = v;
      }
    }
  }

  MonotoneGraph graph_;
  Perturbation pert_;
  Grid grid_;
  Params params_;
  SolverSettings settings_;
  NeumannInverse inverse_;
  Eigen::SparseMatrix<double> jacobian_;
  std::vector<double> a_, a2_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> solver_;
};

/// Advances over [t, t + dt], halving the step on Newton failure down to dt_min.
template <typename StepFn>
StepResult advance_adaptive(StepFn&& step, const Field& u_prev, double t, double dt, double dt_min) {
  try {
    return step(u_prev, t, dt);
  } catch (const NumericalError& err) {
    if (0.5 * dt < dt_min) {
      std::ostringstream msg;
      msg << "step failed at t = " << t << " with dt = " << dt << " (below tau_min after halving): " << err.what();
      throw NumericalError(msg.str(), err.last_residual());
    }
    StepResult first = advance_adaptive(step, u_prev, t, 0.5 * dt, dt_min);
    StepResult second = advance_adaptive(step, first.u, t + 0.5 * dt, 0.5 * dt, dt_min);
    second.newton_iters += first.newton_iters;
    return second;
  }
}

inline std::vector<double> time_grid(double tau, double T) {
  std::vector<double> times{0.0};
  const auto steps = static_cast<std::size_t>(std::ceil(T / tau - 1e-9));
  for (std::size_t k = 1; k <= steps; ++k) times.push_back(std::min(T, static_cast<double>(k) * tau));
  times.back() = T;
  return times;
}

inline StepDiagnostics diagnose(const MonotoneGraph& graph, double t, double eps, double lambda, const Field& u,
                                const Field& mu, const Field& xi, int iters) {
  StepDiagnostics d;
  d.t = t;
  d.mass = mean(u);
  d.norm_H_u = norm_H(u);
  d.grad_energy = eps * gradient_energy(u);
  double s = 0.0;
  for (double v : u.values()) s += moreau_yosida(graph, lambda, v);
  d.betahat_int = u.grid().spacing() * s;
  d.norm_V_mu = norm_V(mu);
  d.norm_H_xi = norm_H(xi);
  d.newton_iters = iters;
  return d;
}

inline double tau_floor(const ProblemSpec& spec) {
  return spec.settings.tau_min > 0.0 ? spec.settings.tau_min : spec.tau / 1024.0;
}

}  // namespace detail

/// Yosida parameter used by a relaxed run: the explicit lambda, or min(cap, kappa*eps).
inline double effective_lambda(const ProblemSpec& spec) {
  if (spec.lambda > 0.0) return spec.lambda;
  return std::min(spec.settings.lambda_cap, spec.settings.kappa * spec.eps);
}

/// One step of the Yosida-regularized relaxed problem from u_prev at time t.
inline StepResult step_regularized(const ProblemSpec& spec, const Field& u_prev, double t) {
  if (!(spec.lambda > 0.0)) throw PreconditionError("step_regularized requires lambda > 0");
  if (!(spec.eps > 0.0)) throw PreconditionError("step_regularized requires eps > 0");
  detail::ImplicitStepper stepper(spec.graph, spec.perturbation, spec.grid,
                                  {spec.lambda, spec.lambda, spec.eps, true}, spec.settings);
  const Field f = build_f(spec.src, t, spec.grid);
  return stepper.solve(u_prev, f, Field(spec.grid), spec.tau);
}

/// Relaxed problem from smooth_initial(u0, eps) to T.
inline Trajectory solve_ch_eps(const ProblemSpec& spec) {
  spec.validate();
  if (!(spec.eps > 0.0)) throw PreconditionError("solve_ch_eps requires eps > 0");
  const double lambda = effective_lambda(spec);
  detail::ImplicitStepper stepper(spec.graph, spec.perturbation, spec.grid, {lambda, lambda, spec.eps, true},
                                  spec.settings);
  const Field zero(spec.grid);
  std::optional<Field> cached_f;
  auto lift = [&](double t) -> Field {
    if (spec.src.time_independent()) {
      if (!cached_f) cached_f = build_f(spec.src, 0.0, spec.grid);
      return *cached_f;
    }
    return build_f(spec.src, t, spec.grid);
  };

  Trajectory traj;
  traj.eps = spec.eps;
  traj.lambda = lambda;
  traj.tau = spec.tau;
  traj.m0 = spec.init.m0;
  traj.times = detail::time_grid(spec.tau, spec.T);

  Field u = smooth_initial(spec.init.u0, spec.eps);
  Field xi0(spec.grid);
  for (std::size_t i = 0; i < u.size(); ++i) xi0[i] = stepper.xi_of(u[i]);
  Field mu0 = stepper.mu_of(u, u, lift(0.0), spec.tau);
  traj.diagnostics.push_back(detail::diagnose(spec.graph, 0.0, spec.eps, lambda, u, mu0, xi0, 0));
  traj.u.push_back(u);
  traj.mu.push_back(std::move(mu0));
  traj.xi.push_back(std::move(xi0));

  auto step = [&](const Field& prev, double t, double dt) { return stepper.solve(prev, lift(t), zero, dt); };
  for (std::size_t k = 1; k < traj.times.size(); ++k) {
    const double t0 = traj.times[k - 1];
    StepResult r = detail::advance_adaptive(step, traj.u.back(), t0, traj.times[k] - t0, detail::tau_floor(spec));
    traj.diagnostics.push_back(
        detail::diagnose(spec.graph, traj.times[k], spec.eps, lambda, r.u, r.mu, r.xi, r.newton_iters));
    traj.u.push_back(std::move(r.u));
    traj.mu.push_back(std::move(r.mu));
    traj.xi.push_back(std::move(r.xi));
  }
  return traj;
}

/// Limit problem u_t = Delta_h xi + g + boundary flux, xi = beta_{limit_lambda}(u),
/// from the raw initial datum. The reported mu is xi - f.
inline Trajectory solve_limit(const ProblemSpec& spec) {
  spec.validate();
  if (spec.eps != 0.0) throw PreconditionError("solve_limit requires eps = 0");
  const double lambda = spec.settings.limit_lambda;
  detail::ImplicitStepper stepper(spec.graph, Perturbation::none(), spec.grid, {lambda, 0.0, 0.0, false},
                                  spec.settings);
  const Field zero(spec.grid);

  Trajectory traj;
  traj.eps = 0.0;
  traj.lambda = lambda;
  traj.tau = spec.tau;
  traj.m0 = spec.init.m0;
  traj.times = detail::time_grid(spec.tau, spec.T);

  const Field& u = spec.init.u0;
  Field xi0(spec.grid);
  for (std::size_t i = 0; i < u.size(); ++i) xi0[i] = stepper.xi_of(u[i]);
  traj.diagnostics.push_back(
      detail::diagnose(spec.graph, 0.0, 0.0, lambda, u, xi0 - build_f(spec.src, 0.0, spec.grid), xi0, 0));
  traj.u.push_back(u);
  traj.mu.push_back(xi0 - build_f(spec.src, 0.0, spec.grid));
  traj.xi.push_back(std::move(xi0));

  auto step = [&](const Field& prev, double t, double dt) {
    return stepper.solve(prev, zero, total_source(spec.src.at(t)), dt);
  };
  for (std::size_t k = 1; k < traj.times.size(); ++k) {
    const double t0 = traj.times[k - 1];
    StepResult r = detail::advance_adaptive(step, traj.u.back(), t0, traj.times[k] - t0, detail::tau_floor(spec));
    r.mu = r.xi - build_f(spec.src, t0, spec.grid);
    traj.diagnostics.push_back(
        detail::diagnose(spec.graph, traj.times[k], 0.0, lambda, r.u, r.mu, r.xi, r.newton_iters));
    traj.u.push_back(std::move(r.u));
    traj.mu.push_back(std::move(r.mu));
    traj.xi.push_back(std::move(r.xi));
  }
  return traj;
}

/// Dispatches on eps: the limit problem for eps = 0, the relaxed problem otherwise.
inline Trajectory simulate(const ProblemSpec& spec) {
  return spec.eps == 0.0 ? solve_limit(spec) : solve_ch_eps(spec);
}

struct EnergyReport {
  std::vector<double> energy;       // E(t_k)
  std::vector<double> dissipation;  // D_k for k >= 1 (D_0 = 0)
  bool applicable = false;          // data time independent, so E must not increase
  bool non_increasing = true;
  double max_increase = 0.0;
};

/// E = eps/2 |grad u|^2 + h sum primitive_lambda(u) + h sum pi_hat(u) - h sum f u,
/// D_k = dt |grad mu_k|^2 + visc |u_k - u_{k-1}|^2 / dt.
inline EnergyReport energy_report(const Trajectory& traj, const ProblemSpec& spec) {
  EnergyReport rep;
  const double h = spec.grid.spacing();
  const bool perturbed = traj.eps > 0.0;
  const double visc = traj.eps > 0.0 ? traj.lambda : 0.0;
  rep.applicable = spec.src.time_independent();
  for (std::size_t k = 0; k < traj.u.size(); ++k) {
    const Field& u = traj.u[k];
    const Field f = build_f(spec.src, traj.times[k], spec.grid);
    double e = 0.5 * traj.eps * gradient_energy(u);
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      s += moreau_yosida(spec.graph, traj.lambda, u[i]);
      if (perturbed) s += perturbation_primitive(spec.perturbation, traj.eps, u[i]);
      s -= f[i] * u[i];
    }
    e += h * s;
    rep.energy.push_back(e);
    if (k == 0) {
      rep.dissipation.push_back(0.0);
      continue;
    }
    const double dt = traj.times[k] - traj.times[k - 1];
    const Field du = u - traj.u[k - 1];
    rep.dissipation.push_back(dt * gradient_energy(traj.mu[k]) + visc * inner(du, du) / dt);
    const double increase = rep.energy[k] - rep.energy[k - 1];
    rep.max_increase = std::max(rep.max_increase, increase);
    if (rep.applicable && increase > 1e-12) rep.non_increasing = false;
  }
  return rep;
}

/// Trajectory CSV plus optional field snapshots every `stride` steps.
inline void write_trajectory(const Trajectory& traj, const std::filesystem::path& dir, std::size_t stride = 0,
                             const std::string& name = "trajectory.csv") {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / name).string());
  out << "t,mass,norm_H_u,grad_energy,betahat_int,norm_V_mu,norm_H_xi,newton_iters\n";
  for (const auto& d : traj.diagnostics) {
    out << format_double(d.t) << ',' << format_double(d.mass) << ',' << format_double(d.norm_H_u) << ','
        << format_double(d.grad_energy) << ',' << format_double(d.betahat_int) << ',' << format_double(d.norm_V_mu)
        << ',' << format_double(d.norm_H_xi) << ',' << d.newton_iters << '\n';
  }
  if (stride == 0) return;
  for (std::size_t k = 0; k < traj.u.size(); ++k) {
    if (k % stride == 0 || k + 1 == traj.u.size()) {
      write_field_csv(traj.u[k], (dir / ("snapshot_" + std::to_string(k) + ".csv")).string());
    }
  }
}

}  // namespace chlimit
