#pragma once

// Problem data: interior source g, boundary fluxes, the elliptic lift f with
// -Delta f = g and normal derivative h, and the initial-data smoother.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "chlimit/error.hpp"
#include "chlimit/field.hpp"
#include "chlimit/graphs.hpp"
#include "chlimit/rates.hpp"

namespace chlimit {

enum class Regime {
  A4,  // general compatible (g, h)
  A6,  // h = 0 and m(g) = 0
};

struct SourceSample {
  double time = 0.0;
  Field g;
  double h_left = 0.0;   // outward normal derivative at x = 0
  double h_right = 0.0;  // outward normal derivative at x = L
};

/// h * sum(g) + h_left + h_right; vanishes for compatible data.
inline double compatibility_integral(const SourceSample& s) {
  double total = 0.0;
  for (double v : s.g.values()) total += v;
  return s.g.grid().spacing() * total + s.h_left + s.h_right;
}

/// Time-sampled source data, piecewise constant between samples.
class SourceData {
 public:
  SourceData() = default;

  SourceData(Regime regime, std::vector<SourceSample> samples) : regime_(regime), samples_(std::move(samples)) {
    if (samples_.empty()) throw DataError("source data needs at least one sample");
    for (std::size_t k = 0; k < samples_.size(); ++k) {
      if (k > 0 && !(samples_[k].time > samples_[k - 1].time)) {
        throw DataError("source sample times must be strictly increasing");
      }
      validate(samples_[k]);
    }
  }

  static SourceData zero(const Grid& grid, Regime regime = Regime::A6) {
    return SourceData(regime, {SourceSample{0.0, Field(grid), 0.0, 0.0}});
  }

  static SourceData constant(Field g, double h_left, double h_right, Regime regime) {
    return SourceData(regime, {SourceSample{0.0, std::move(g), h_left, h_right}});
  }

  Regime regime() const { return regime_; }
  bool time_independent() const { return samples_.size() == 1; }
  const std::vector<SourceSample>& samples() const { return samples_; }

  /// Sample in force at time t: the last one with sample.time <= t.
  const SourceSample& at(double t) const {
    std::size_t k = 0;
    while (k + 1 < samples_.size() && samples_[k + 1].time <= t * (1.0 + 1e-12) + 1e-300) ++k;
    return samples_[k];
  }

  bool identically_zero() const {
    for (const auto& s : samples_) {
      if (s.h_left != 0.0 || s.h_right != 0.0 || s.g.max_abs() != 0.0) return false;
    }
    return true;
  }

 private:
  void validate(const SourceSample& s) const {
    const double integral = compatibility_integral(s);
    if (std::abs(integral) > 1e-10) {
      std::ostringstream msg;
      msg << "flux compatibility violated at t = " << s.time << ": integral of g over the domain plus boundary flux "
          << "= " << integral << " (h*sum(g) = " << integral - s.h_left - s.h_right << ", h_left + h_right = "
          << s.h_left + s.h_right << "), must vanish";
      throw DataError(msg.str());
    }
    if (regime_ == Regime::A6) {
      if (s.h_left != 0.0 || s.h_right != 0.0) {
        throw DataError("regime A6 requires zero boundary flux");
      }
      const double gm = mean(s.g);
      if (std::abs(gm) > 1e-10) {
        std::ostringstream msg;
        msg << "regime A6 requires m(g) = 0, got " << gm;
        throw DataError(msg.str());
      }
    }
    if (!s.g.all_finite()) throw DataError("source g has non-finite values");
  }

  Regime regime_ = Regime::A6;
  std::vector<SourceSample> samples_;
};

/// Boundary flux as a cell source: h_left/h in the first cell, h_right/h in the last.
inline Field boundary_source(const Grid& grid, double h_left, double h_right) {
  Field b(grid);
  b[0] += h_left / grid.spacing();
  b[grid.cells - 1] += h_right / grid.spacing();
  return b;
}

/// g + boundary cell source, the right-hand side of -Delta_h f.
inline Field total_source(const SourceSample& s) {
  return s.g + boundary_source(s.g.grid(), s.h_left, s.h_right);
}

/// Zero-mean solution of -f'' = g with -f'(0) = h_left and f'(L) = h_right.
inline Field build_f(const SourceData& src, double t, const Grid& grid) {
  const SourceSample& s = src.at(t);
  if (!(s.g.grid() == grid)) throw PreconditionError("build_f: source lives on a different grid");
  const double integral = compatibility_integral(s);
  if (std::abs(integral) > 1e-10) {
    std::ostringstream msg;
    msg << "build_f: flux compatibility violated, integral = " << integral;
    throw DataError(msg.str());
  }
  return NeumannInverse(grid).apply_projected(total_source(s));
}

struct InitialData {
  Field u0;
  double m0 = 0.0;

  InitialData() = default;
  explicit InitialData(Field u) : u0(std::move(u)), m0(mean(u0)) {}
};

/// u0 must take values where the primitive is finite and its mean must be interior to D(beta).
inline void validate_initial(const InitialData& init, const MonotoneGraph& graph) {
  for (std::size_t i = 0; i < init.u0.size(); ++i) {
    const double v = init.u0[i];
    if (!std::isfinite(v) || !std::isfinite(graph.primitive(v))) {
      std::ostringstream msg;
      msg << "initial value u0[" << i << "] = " << v << " lies outside the domain of the " << graph.name()
          << " primitive";
      throw DataError(msg.str());
    }
  }
  if (!graph.domain().interior(init.m0)) {
    std::ostringstream msg;
    msg << "initial mean m0 = " << init.m0 << " is not interior to D(beta) for graph " << graph.name();
    throw DataError(msg.str());
  }
}

/// Solves (I - eps*Delta_h) u = u0 with Neumann closure; preserves the mean.
inline Field smooth_initial(const Field& u0, double eps) {
  detail::require_eps(eps);
  const std::size_t n = u0.size();
  const double h = u0.grid().spacing();
  const double a = eps / (h * h);
  std::vector<double> lower(n, -a), diag(n, 1.0 + 2.0 * a), upper(n, -a);
  diag[0] = 1.0 + a;
  diag[n - 1] = 1.0 + a;
  auto x = solve_tridiagonal(lower, diag, upper, u0.values());
  Field out(u0.grid(), std::move(x));
  // exact in exact arithmetic; remove the rounding drift
  out += mean(u0) - mean(out);
  return out;
}

struct A5Row {
  double eps = 0.0;
  double norm_H_sq = 0.0;    // |u0e|_H^2
  double betahat_int = 0.0;  // integral of primitive(u0e)
  double grad_energy = 0.0;  // eps |grad u0e|^2
  double gap_vstar = 0.0;    // |u0e - u0|_{V*}
};

struct A5Report {
  std::vector<A5Row> rows;
  double c4 = 0.0;
  std::optional<RateFit> gap_fit;     // |u0e - u0|_{V*} ~ eps^p
  std::optional<RateFit> gap_sq_fit;  // |u0e - u0|_{V*}^2 ~ eps^p
  bool non_blowup = true;             // every row within the a priori bounds
  bool order_ok = true;               // gap order >= 1/2 - 0.05 when a fit exists
};

inline A5Report check_A5_bounds(const Field& u0, const std::vector<double>& eps_list, const MonotoneGraph& graph) {
  for (std::size_t i = 0; i < u0.size(); ++i) {
    if (!std::isfinite(graph.primitive(u0[i]))) {
      std::ostringstream msg;
      msg << "u0[" << i << "] = " << u0[i] << " lies outside the closure of D(beta) for graph " << graph.name();
      throw DataError(msg.str());
    }
  }
  A5Report report;
  if (eps_list.empty()) return report;
  const NeumannInverse inverse(u0.grid());
  const double h = u0.grid().spacing();
  const double u0_sq = inner(u0, u0);
  double betahat_u0 = 0.0;
  for (double v : u0.values()) betahat_u0 += graph.primitive(v);
  betahat_u0 *= h;

  std::vector<std::pair<double, double>> gap, gap_sq;
  for (double eps : eps_list) {
    const Field ue = smooth_initial(u0, eps);
    A5Row row;
    row.eps = eps;
    row.norm_H_sq = inner(ue, ue);
    for (double v : ue.values()) row.betahat_int += graph.primitive(v);
    row.betahat_int *= h;
    row.grad_energy = eps * gradient_energy(ue);
    row.gap_vstar = norm_Vstar(ue - u0, inverse);
    if (row.gap_vstar <= 1e-13 * std::max(1.0, u0.max_abs())) row.gap_vstar = 0.0;  // rounding only
    const double tol = 1e-12 * std::max(1.0, u0_sq);
    if (row.norm_H_sq > u0_sq + tol || row.grad_energy > 0.5 * u0_sq + tol ||
        row.betahat_int > betahat_u0 + 1e-12 * std::max(1.0, betahat_u0) || !std::isfinite(row.betahat_int)) {
      report.non_blowup = false;
    }
    report.c4 = std::max({report.c4, row.norm_H_sq, row.betahat_int, row.grad_energy});
    gap.emplace_back(eps, row.gap_vstar);
    gap_sq.emplace_back(eps, row.gap_vstar * row.gap_vstar);
    report.rows.push_back(row);
  }
  try {
    report.gap_fit = fit_rate(gap);
    report.gap_sq_fit = fit_rate(gap_sq);
    report.order_ok = report.gap_fit->slope >= 0.5 - 0.05;
  } catch (const NumericalError&) {
    // constant u0: the gap vanishes identically and there is nothing to fit
  }
  return report;
}

}  // namespace chlimit
