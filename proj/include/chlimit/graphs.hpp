#pragma once

// Maximal monotone graphs on the real line and their Yosida machinery.
//
// A graph is exposed through its resolvent J_lambda = (I + lambda*beta)^-1,
// the Yosida approximation beta_lambda = (I - J_lambda)/lambda and the
// Moreau-Yosida envelope of the convex primitive. All three are single valued
// on the whole real line, which is all the time-stepping scheme ever needs.
// The set-valued graph itself is only reachable through minimal_section().

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "chlimit/error.hpp"

namespace chlimit {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class GraphKind { Stefan, PorousMedium, HeleShaw, Logarithmic, PenroseFife, FastDiffusion, Linear };

/// Real interval with independently open or closed ends; infinite ends are open.
struct Interval {
  double lo = -kInf;
  double hi = kInf;
  bool lo_closed = false;
  bool hi_closed = false;

  bool contains(double r) const {
    const bool above = lo_closed ? r >= lo : r > lo;
    const bool below = hi_closed ? r <= hi : r < hi;
    return above && below;
  }
  bool interior(double r) const { return r > lo && r < hi; }
  double distance_to_boundary(double r) const { return std::min(r - lo, hi - r); }
};

/// Per-kind parameters. Fields irrelevant to a kind are ignored.
struct GraphParams {
  double ks = 1.0;      // solid conductivity (Stefan)
  double kl = 1.0;      // liquid conductivity (Stefan)
  double latent = 1.0;  // latent heat (Stefan, Penrose-Fife)
  double q = 2.0;       // exponent (porous medium q > 1, fast diffusion 0 <= q < 1)
  double alpha = 1.0;   // perturbation slope (logarithmic)
  double thetac = 1.0;  // critical temperature (Penrose-Fife)
};

class MonotoneGraph {
 public:
  static MonotoneGraph stefan(double ks = 1.0, double kl = 1.0, double latent = 1.0) {
    if (!(ks > 0.0) || !(kl > 0.0) || !(latent > 0.0)) {
      throw ParameterError("stefan graph requires ks, kl, latent > 0");
    }
    GraphParams p;
    p.ks = ks;
    p.kl = kl;
    p.latent = latent;
    return MonotoneGraph(GraphKind::Stefan, p);
  }

  static MonotoneGraph porous_medium(double q = 2.0) {
    if (!(q > 1.0)) throw ParameterError("porous medium graph requires q > 1");
    GraphParams p;
    p.q = q;
    return MonotoneGraph(GraphKind::PorousMedium, p);
  }

  static MonotoneGraph hele_shaw() { return MonotoneGraph(GraphKind::HeleShaw, GraphParams{}); }

  static MonotoneGraph logarithmic(double alpha = 1.0) {
    if (!(alpha > 0.0)) throw ParameterError("logarithmic graph requires alpha > 0");
    GraphParams p;
    p.alpha = alpha;
    return MonotoneGraph(GraphKind::Logarithmic, p);
  }

  static MonotoneGraph penrose_fife(double thetac = 1.0, double latent = 1.0) {
    if (!(thetac > 0.0) || !(latent > 0.0)) {
      throw ParameterError("penrose-fife graph requires thetac, latent > 0");
    }
    GraphParams p;
    p.thetac = thetac;
    p.latent = latent;
    return MonotoneGraph(GraphKind::PenroseFife, p);
  }

  /// q = 0 is the sign graph.
  static MonotoneGraph fast_diffusion(double q = 0.5) {
    if (!(q >= 0.0 && q < 1.0)) throw ParameterError("fast diffusion graph requires 0 <= q < 1");
    GraphParams p;
    p.q = q;
    return MonotoneGraph(GraphKind::FastDiffusion, p);
  }

  static MonotoneGraph linear() { return MonotoneGraph(GraphKind::Linear, GraphParams{}); }

  static const std::vector<std::string>& names() {
    static const std::vector<std::string> kNames = {"stefan", "porous", "heleshaw", "log",
                                                    "penrose", "fast", "linear"};
    return kNames;
  }

  /// Builds a graph from its config name. `q` defaults to 2 (porous) or 1/2 (fast)
  /// when not supplied.
  static MonotoneGraph from_name(const std::string& name, const GraphParams& p,
                                 std::optional<double> q = std::nullopt) {
    if (name == "stefan") return stefan(p.ks, p.kl, p.latent);
    if (name == "porous") return porous_medium(q.value_or(2.0));
    if (name == "heleshaw") return hele_shaw();
    if (name == "log") return logarithmic(p.alpha);
    if (name == "penrose") return penrose_fife(p.thetac, p.latent);
    if (name == "fast") return fast_diffusion(q.value_or(0.5));
    if (name == "linear") return linear();
    std::ostringstream msg;
    msg << "unknown graph '" << name << "' (expected one of:";
    for (const auto& n : names()) msg << ' ' << n;
    msg << ')';
    throw ConfigError(msg.str());
  }

  GraphKind kind() const { return kind_; }
  const GraphParams& params() const { return params_; }

  std::string name() const {
    switch (kind_) {
      case GraphKind::Stefan: return "stefan";
      case GraphKind::PorousMedium: return "porous";
      case GraphKind::HeleShaw: return "heleshaw";
      case GraphKind::Logarithmic: return "log";
      case GraphKind::PenroseFife: return "penrose";
      case GraphKind::FastDiffusion: return "fast";
      case GraphKind::Linear: return "linear";
    }
    return "?";
  }

  /// Effective domain D(beta).
  Interval domain() const {
    switch (kind_) {
      case GraphKind::HeleShaw: return {0.0, 1.0, true, true};
      case GraphKind::Logarithmic: return {-1.0, 1.0, false, false};
      case GraphKind::PenroseFife: return {-params_.thetac, kInf, false, false};
      default: return {};
    }
  }

  /// Effective domain of the primitive; the logarithmic primitive is finite on [-1, 1].
  Interval primitive_domain() const {
    if (kind_ == GraphKind::Logarithmic) return {-1.0, 1.0, true, true};
    return domain();
  }

  /// Whether the primitive grows at least quadratically at infinity.
  bool coercive() const {
    return kind_ != GraphKind::PenroseFife && kind_ != GraphKind::FastDiffusion;
  }

  /// Global Lipschitz constant of beta, when beta is a Lipschitz function on all of R.
  std::optional<double> lipschitz_constant() const {
    if (kind_ == GraphKind::Stefan) return std::max(params_.ks, params_.kl);
    if (kind_ == GraphKind::Linear) return 1.0;
    return std::nullopt;
  }

  /// Points of D(beta) where beta is not C^1 (corners, jumps, vertical segments).
  std::vector<double> kinks() const {
    switch (kind_) {
      case GraphKind::Stefan: return {0.0, params_.latent};
      case GraphKind::HeleShaw: return {0.0, 1.0};
      case GraphKind::PenroseFife: return {0.0, params_.latent};
      case GraphKind::FastDiffusion: return {0.0};
      default: return {};
    }
  }

  /// Convex primitive with primitive(0) = 0; +inf outside its domain.
  double primitive(double s) const {
    const auto& p = params_;
    switch (kind_) {
      case GraphKind::Stefan:
        if (s < 0.0) return 0.5 * p.ks * s * s;
        if (s <= p.latent) return 0.0;
        return 0.5 * p.kl * (s - p.latent) * (s - p.latent);
      case GraphKind::PorousMedium:
      case GraphKind::FastDiffusion:
        return std::pow(std::abs(s), p.q + 1.0) / (p.q + 1.0);
      case GraphKind::HeleShaw: return (s >= 0.0 && s <= 1.0) ? 0.0 : kInf;
      case GraphKind::Logarithmic: return log_primitive(s);
      case GraphKind::PenroseFife: {
        if (s <= -p.thetac) return kInf;
        if (s < 0.0) {
          const double x = s / p.thetac;
          return x - std::log1p(x);
        }
        if (s <= p.latent) return 0.0;
        const double x = (s - p.latent) / p.thetac;
        return x - std::log1p(x);
      }
      case GraphKind::Linear: return 0.5 * s * s;
    }
    return kInf;
  }

  /// Element of beta(s) of least absolute value; empty when s is outside D(beta).
  std::optional<double> minimal_section(double s) const {
    switch (kind_) {
      case GraphKind::HeleShaw:
        if (s < 0.0 || s > 1.0) return std::nullopt;
        return 0.0;
      case GraphKind::FastDiffusion:
        if (s == 0.0) return 0.0;
        return smooth_value(s);
      default:
        if (!domain().contains(s)) return std::nullopt;
        return smooth_value(s);
    }
  }

  /// beta(s) on the branch containing s, for s where beta is single valued.
  double smooth_value(double s) const {
    const auto& p = params_;
    switch (kind_) {
      case GraphKind::Stefan:
        if (s < 0.0) return p.ks * s;
        if (s <= p.latent) return 0.0;
        return p.kl * (s - p.latent);
      case GraphKind::PorousMedium:
      case GraphKind::FastDiffusion:
        if (s == 0.0) return 0.0;
        return std::copysign(std::pow(std::abs(s), p.q), s);
      case GraphKind::HeleShaw: return 0.0;
      case GraphKind::Logarithmic:
        if (std::abs(s) >= 1.0) return std::copysign(kInf, s);
        return std::abs(s) * 2.0 * std::atanh(s);
      case GraphKind::PenroseFife:
        if (s <= -p.thetac) return -kInf;
        if (s < 0.0) return s / (p.thetac * (s + p.thetac));
        if (s <= p.latent) return 0.0;
        return (s - p.latent) / (p.thetac * (s - p.latent + p.thetac));
      case GraphKind::Linear: return s;
    }
    return 0.0;
  }

  /// beta'(s) on the branch containing s; +inf at vertical tangents.
  double smooth_slope(double s) const {
    const auto& p = params_;
    switch (kind_) {
      case GraphKind::Stefan:
        if (s < 0.0) return p.ks;
        if (s <= p.latent) return 0.0;
        return p.kl;
      case GraphKind::PorousMedium:
      case GraphKind::FastDiffusion:
        if (s == 0.0) return (p.q > 1.0) ? 0.0 : kInf;
        return p.q * std::pow(std::abs(s), p.q - 1.0);
      case GraphKind::HeleShaw: return 0.0;
      case GraphKind::Logarithmic: {
        const double a = std::abs(s);
        if (a >= 1.0) return kInf;
        return 2.0 * std::atanh(a) + 2.0 * a / ((1.0 - a) * (1.0 + a));
      }
      case GraphKind::PenroseFife:
        if (s <= -p.thetac) return kInf;
        if (s < 0.0) return 1.0 / ((s + p.thetac) * (s + p.thetac));
        if (s <= p.latent) return 0.0;
        return 1.0 / ((s - p.latent + p.thetac) * (s - p.latent + p.thetac));
      case GraphKind::Linear: return 1.0;
    }
    return 0.0;
  }

 private:
  MonotoneGraph(GraphKind kind, GraphParams params) : kind_(kind), params_(params) {}

  static double log_primitive(double s) {
    const double a = std::abs(s);
    if (a > 1.0) return kInf;
    if (a == 1.0) return 1.0;
    if (a < 0.1) {
      // (s^2 - 1) atanh(s) + s = sum_k 2 s^(2k+1) / ((2k-1)(2k+1)), cancellation-free
      double term = a * a * a;
      double sum = 0.0;
      for (int k = 1; k < 12; ++k) {
        sum += 2.0 * term / ((2.0 * k - 1.0) * (2.0 * k + 1.0));
        term *= a * a;
      }
      return sum;
    }
    return (a * a - 1.0) * std::atanh(a) + a;
  }

  GraphKind kind_;
  GraphParams params_;
};

namespace detail {

inline void require_positive_lambda(double lambda) {
  if (!(lambda > 0.0)) {
    std::ostringstream msg;
    msg << "lambda must be positive, got " << lambda;
    throw ParameterError(msg.str());
  }
}

/// Root of the strictly increasing map s -> s + lambda*beta(s) - r on the open
/// bracket (lo, hi), where the map is negative near lo and positive near hi.
/// Newton steps are taken from inside the bracket and replaced by bisection
/// whenever they leave it.
inline double solve_branch(const MonotoneGraph& g, double lambda, double r, double lo, double hi) {
  auto phi = [&](double s) { return s + lambda * g.smooth_value(s) - r; };
  if (std::isfinite(lo) && lo < hi && phi(lo) > 0.0) {
    std::ostringstream msg;
    msg << "resolvent bracket failure for graph " << g.name() << ": phi(lo=" << lo
        << ") = " << phi(lo) << " > 0 at r = " << r << ", lambda = " << lambda;
    throw InternalError(msg.str());
  }
  if (std::isfinite(hi) && lo < hi && phi(hi) < 0.0) {
    std::ostringstream msg;
    msg << "resolvent bracket failure for graph " << g.name() << ": phi(hi=" << hi
        << ") = " << phi(hi) << " < 0 at r = " << r << ", lambda = " << lambda;
    throw InternalError(msg.str());
  }
  double s = 0.5 * (lo + hi);
  for (int iter = 0; iter < 300; ++iter) {
    const double f = phi(s);
    if (f == 0.0) return s;
    if (f < 0.0) {
      lo = s;
    } else {
      hi = s;
    }
    const double width_tol = 2.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(s));
    if (hi - lo <= width_tol) return s;
    const double slope = 1.0 + lambda * g.smooth_slope(s);
    double next = std::isfinite(slope) ? s - f / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) <= 0.5 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(s))) {
      return next;
    }
    s = next;
  }
  return s;
}

}  // namespace detail

/// J_lambda(r) = (I + lambda*beta)^-1 (r). Closed form for the piecewise linear
/// graphs, safeguarded Newton-bisection on the smooth branch otherwise.
inline double resolvent(const MonotoneGraph& g, double lambda, double r) {
  detail::require_positive_lambda(lambda);
  const auto& p = g.params();
  switch (g.kind()) {
    case GraphKind::Linear: return r / (1.0 + lambda);
    case GraphKind::Stefan:
      if (r < 0.0) return r / (1.0 + lambda * p.ks);
      if (r <= p.latent) return r;
      return p.latent + (r - p.latent) / (1.0 + lambda * p.kl);
    case GraphKind::HeleShaw: return std::clamp(r, 0.0, 1.0);
    case GraphKind::FastDiffusion:
      if (p.q == 0.0) {
        if (std::abs(r) <= lambda) return 0.0;
        return r - std::copysign(lambda, r);
      }
      [[fallthrough]];
    case GraphKind::PorousMedium:
    case GraphKind::Logarithmic: {
      // odd graphs: the root lies between 0 and r
      if (r == 0.0) return 0.0;
      const double a = std::abs(r);
      double hi = a;
      if (g.kind() == GraphKind::Logarithmic) hi = std::min(a, 1.0);
      return std::copysign(detail::solve_branch(g, lambda, a, 0.0, hi), r);
    }
    case GraphKind::PenroseFife:
      if (r >= 0.0 && r <= p.latent) return r;
      if (r < 0.0) return detail::solve_branch(g, lambda, r, std::max(r, -p.thetac), 0.0);
      return detail::solve_branch(g, lambda, r, p.latent, r);
  }
  throw InternalError("resolvent: unhandled graph kind");
}

/// beta_lambda(r) = (r - J_lambda(r)) / lambda, evaluated without cancellation.
inline double yosida(const MonotoneGraph& g, double lambda, double r) {
  detail::require_positive_lambda(lambda);
  const auto& p = g.params();
  switch (g.kind()) {
    case GraphKind::Linear: return r / (1.0 + lambda);
    case GraphKind::Stefan:
      if (r < 0.0) return p.ks * r / (1.0 + lambda * p.ks);
      if (r <= p.latent) return 0.0;
      return p.kl * (r - p.latent) / (1.0 + lambda * p.kl);
    case GraphKind::HeleShaw:
      if (r < 0.0) return r / lambda;
      if (r > 1.0) return (r - 1.0) / lambda;
      return 0.0;
    case GraphKind::FastDiffusion:
      if (p.q == 0.0) {
        if (std::abs(r) <= lambda) return r / lambda;
        return std::copysign(1.0, r);
      }
      break;
    case GraphKind::PenroseFife:
      if (r >= 0.0 && r <= p.latent) return 0.0;
      break;
    default: break;
  }
  const double s = resolvent(g, lambda, r);
  // beta(J) is exact up to rounding of J unless J saturated against an open
  // domain end, in which case the resolvent identity no longer closes.
  const double b = g.smooth_value(s);
  if (std::isfinite(b)) {
    const double defect = std::abs(s + lambda * b - r);
    if (defect <= 8.0 * std::numeric_limits<double>::epsilon() * std::max({std::abs(r), std::abs(s), 1e-300})) {
      return b;
    }
  }
  return (r - s) / lambda;
}

/// d/dr beta_lambda(r); one-sided value at corners.
inline double yosida_slope(const MonotoneGraph& g, double lambda, double r) {
  detail::require_positive_lambda(lambda);
  const auto& p = g.params();
  switch (g.kind()) {
    case GraphKind::Linear: return 1.0 / (1.0 + lambda);
    case GraphKind::Stefan:
      if (r < 0.0) return p.ks / (1.0 + lambda * p.ks);
      if (r <= p.latent) return 0.0;
      return p.kl / (1.0 + lambda * p.kl);
    case GraphKind::HeleShaw: return (r < 0.0 || r > 1.0) ? 1.0 / lambda : 0.0;
    case GraphKind::FastDiffusion:
      if (p.q == 0.0) return std::abs(r) <= lambda ? 1.0 / lambda : 0.0;
      break;
    case GraphKind::PenroseFife:
      if (r >= 0.0 && r <= p.latent) return 0.0;
      break;
    default: break;
  }
  const double d = g.smooth_slope(resolvent(g, lambda, r));
  if (!std::isfinite(d)) return 1.0 / lambda;
  return d / (1.0 + lambda * d);
}

/// Moreau-Yosida envelope: (1/2lambda)|r - J|^2 + primitive(J) = (lambda/2) beta_lambda^2 + primitive(J).
inline double moreau_yosida(const MonotoneGraph& g, double lambda, double r) {
  const double b = yosida(g, lambda, r);
  const double s = resolvent(g, lambda, r);
  double base = g.primitive(s);
  if (!std::isfinite(base)) {
    // J saturated at the closed end of the primitive domain (logarithmic graph)
    base = g.primitive(std::clamp(s, g.primitive_domain().lo, g.primitive_domain().hi));
  }
  return 0.5 * lambda * b * b + base;
}

// ---------------------------------------------------------------------------
// Anti-monotone perturbations pi_eps.

enum class PerturbationKind {
  None,
  Stefan,          // eps*L/2, eps*(L/2 - r), -eps*L/2 on the three phases
  NegativeLinear,  // -eps*slope*r
  HalfMinus,       // eps*(1/2 - r)
};

struct Perturbation {
  PerturbationKind kind = PerturbationKind::None;
  double param = 0.0;           // latent heat (Stefan) or slope (NegativeLinear)
  double c3 = 0.0;              // |pi_eps(0)| + Lip(pi_eps) <= c3 * sigma(eps)
  double sigma_exponent = 0.5;  // sigma(eps) = eps^sigma_exponent

  static Perturbation none() { return {}; }

  /// The perturbation that accompanies each catalog graph.
  static Perturbation for_graph(const MonotoneGraph& g) {
    const auto& p = g.params();
    switch (g.kind()) {
      case GraphKind::Stefan:
      case GraphKind::PenroseFife:
        return {PerturbationKind::Stefan, p.latent, 1.0 + 0.5 * p.latent, 0.5};
      case GraphKind::PorousMedium:
      case GraphKind::FastDiffusion:
      case GraphKind::Linear:
        return {PerturbationKind::NegativeLinear, 1.0, 1.0, 0.5};
      case GraphKind::Logarithmic:
        return {PerturbationKind::NegativeLinear, p.alpha, p.alpha, 0.5};
      case GraphKind::HeleShaw:
        return {PerturbationKind::HalfMinus, 0.0, 1.5, 0.5};
    }
    return {};
  }

  double sigma(double eps) const { return std::pow(eps, sigma_exponent); }
};

namespace detail {
inline void require_eps(double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) {
    std::ostringstream msg;
    msg << "eps must lie in (0, 1], got " << eps;
    throw ParameterError(msg.str());
  }
}
}  // namespace detail

inline double perturbation_value(const Perturbation& p, double eps, double r) {
  detail::require_eps(eps);
  switch (p.kind) {
    case PerturbationKind::None: return 0.0;
    case PerturbationKind::Stefan: {
      const double L = p.param;
      if (r < 0.0) return 0.5 * eps * L;
      if (r <= L) return eps * (0.5 * L - r);
      return -0.5 * eps * L;
    }
    case PerturbationKind::NegativeLinear: return -eps * p.param * r;
    case PerturbationKind::HalfMinus: return eps * (0.5 - r);
  }
  return 0.0;
}

inline double perturbation_slope(const Perturbation& p, double eps, double r) {
  detail::require_eps(eps);
  switch (p.kind) {
    case PerturbationKind::None: return 0.0;
    case PerturbationKind::Stefan: return (r >= 0.0 && r <= p.param) ? -eps : 0.0;
    case PerturbationKind::NegativeLinear: return -eps * p.param;
    case PerturbationKind::HalfMinus: return -eps;
  }
  return 0.0;
}

/// Primitive of pi_eps vanishing at 0.
inline double perturbation_primitive(const Perturbation& p, double eps, double r) {
  detail::require_eps(eps);
  switch (p.kind) {
    case PerturbationKind::None: return 0.0;
    case PerturbationKind::Stefan: {
      const double L = p.param;
      if (r < 0.0) return 0.5 * eps * L * r;
      if (r <= L) return eps * (0.5 * L * r - 0.5 * r * r);
      return -0.5 * eps * L * (r - L);
    }
    case PerturbationKind::NegativeLinear: return -0.5 * eps * p.param * r * r;
    case PerturbationKind::HalfMinus: return eps * (0.5 * r - 0.5 * r * r);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Coercivity inequality beta_lambda(r)(r - m0) >= c5 |beta_lambda(r)| - c6.

struct CoercivityMargin {
  double c5 = 0.0;
  double c6 = 0.0;
  double margin = 0.0;  // min over the grid of beta_l(r)(r-m0) - c5|beta_l(r)| + c6
};

/// c5 is half the distance from m0 to the boundary of D(beta), clipped to 1.
inline double coercivity_c5(const MonotoneGraph& g, double m0) {
  return std::min(1.0, 0.5 * g.domain().distance_to_boundary(m0));
}

/// Evaluates the coercivity inequality on `r_grid`. Without an explicit c6 the
/// smallest c6 that makes the inequality hold on the grid is used.
inline CoercivityMargin coercivity_margin(const MonotoneGraph& g, double lambda, double m0,
                                          std::span<const double> r_grid,
                                          std::optional<double> c6 = std::nullopt) {
  detail::require_positive_lambda(lambda);
  if (!g.domain().interior(m0)) {
    std::ostringstream msg;
    msg << "m0 = " << m0 << " is not in the interior of D(beta) for graph " << g.name();
    throw PreconditionError(msg.str());
  }
  CoercivityMargin out;
  out.c5 = coercivity_c5(g, m0);
  double worst = kInf;
  double violated = 0.0;
  for (double r : r_grid) {
    const double b = yosida(g, lambda, r);
    const double value = b * (r - m0) - out.c5 * std::abs(b);
    worst = std::min(worst, value);
    violated = std::max(violated, -value);
  }
  out.c6 = c6.value_or(violated);
  out.margin = r_grid.empty() ? out.c6 : worst + out.c6;
  return out;
}

}  // namespace chlimit
