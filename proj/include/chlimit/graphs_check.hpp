#pragma once

// Sampled property checks for the Yosida machinery of a monotone graph.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "chlimit/graphs.hpp"

namespace chlimit {

struct GraphCheckOptions {
  std::vector<double> lambdas = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  std::size_t samples = 10000;
  double r_min = -4.0;
  double r_max = 4.0;
  std::uint64_t seed = 20240611;
  double fd_step = 1e-5;
  double fd_tol = 1e-6;
  double kink_gap = 1e-3;  // FD points closer than this to a kink of beta_lambda are skipped
};

struct LambdaCheck {
  double lambda = 0.0;
  bool monotone = true;
  bool lipschitz = true;
  bool nonexpansive = true;
  bool envelope_order = true;  // 0 <= betahat_lambda <= betahat
  bool derivative = true;      // betahat_lambda' = beta_lambda
  bool coercivity = true;      // beta_l(r)(r - m0) >= c5|beta_l(r)| - c6
  double max_fd_error = 0.0;   // relative
  std::size_t fd_points = 0;
  bool pass() const { return monotone && lipschitz && nonexpansive && envelope_order && derivative && coercivity; }
};

struct GraphCheck {
  std::string name;
  std::vector<LambdaCheck> rows;
  bool coercive_flag = false;
  bool coercive_detected = false;
  double c1_small = 0.0;  // min of (betahat + 1)/r^2 over 1 <= |r| <= 1e2
  double c1_large = 0.0;  // same over 1 <= |r| <= 1e4
  double m0 = 0.0;
  double c6 = 0.0;
  bool coercivity_consistent() const { return coercive_flag == coercive_detected; }
  bool pass() const {
    if (!coercivity_consistent()) return false;
    return std::all_of(rows.begin(), rows.end(), [](const LambdaCheck& r) { return r.pass(); });
  }
};

/// Points in r where beta_lambda fails to be smooth, plus the finite ends of
/// D(beta), where its curvature blows up as lambda -> 0.
inline std::vector<double> yosida_kinks(const MonotoneGraph& g, double lambda) {
  if (g.kind() == GraphKind::FastDiffusion && g.params().q == 0.0) return {-lambda, lambda};
  // beta vanishes at every kink of the catalog graphs, so J(r) = s at r = s
  std::vector<double> out = g.kinks();
  const Interval d = g.domain();
  for (double e : {d.lo, d.hi}) {
    if (std::isfinite(e) && std::find(out.begin(), out.end(), e) == out.end()) out.push_back(e);
  }
  return out;
}

namespace detail {

inline double min_c1(const MonotoneGraph& g, double R) {
  double best = kInf;
  const int n = 4000;
  for (int k = 0; k <= n; ++k) {
    const double r = std::pow(R, static_cast<double>(k) / n);
    for (double s : {r, -r}) best = std::min(best, (g.primitive(s) + 1.0) / (s * s));
  }
  return best;
}

// sup of |beta°(r)| (c5 + |r - m0|) near m0, large enough c6 for the coercivity inequality
inline double coercivity_c6(const MonotoneGraph& g, double m0, double c5) {
  const double lo = std::min(0.0, m0 - c5), hi = std::max(0.0, m0 + c5);
  double sup = 0.0;
  const int n = 2000;
  for (int k = 0; k <= n; ++k) {
    const double r = lo + (hi - lo) * k / n;
    const auto b = g.minimal_section(r);
    if (b && std::isfinite(*b)) sup = std::max(sup, std::abs(*b) * (c5 + std::abs(r - m0)));
  }
  return sup;
}

}  // namespace detail

inline double default_check_mean(const MonotoneGraph& g) { return g.kind() == GraphKind::Logarithmic ? 0.0 : 0.5; }

inline GraphCheck check_graph(const MonotoneGraph& g, const GraphCheckOptions& opt = {}) {
  GraphCheck out;
  out.name = g.name();
  out.coercive_flag = g.coercive();
  out.c1_small = detail::min_c1(g, 1e2);
  out.c1_large = detail::min_c1(g, 1e4);
  out.coercive_detected = out.c1_large >= 0.5 * out.c1_small;
  out.m0 = default_check_mean(g);
  const double c5 = coercivity_c5(g, out.m0);
  out.c6 = detail::coercivity_c6(g, out.m0, c5);

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> dist(opt.r_min, opt.r_max);
  std::vector<double> rs(opt.samples);
  for (double& r : rs) r = dist(rng);
  std::sort(rs.begin(), rs.end());

  for (double lambda : opt.lambdas) {
    LambdaCheck row;
    row.lambda = lambda;
    const auto kinks = yosida_kinks(g, lambda);
    std::vector<double> b(rs.size()), j(rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
      b[i] = yosida(g, lambda, rs[i]);
      j[i] = resolvent(g, lambda, rs[i]);
    }
    const auto coercivity = coercivity_margin(g, lambda, out.m0, rs, out.c6);
    row.coercivity = coercivity.margin >= -1e-12 * std::max(1.0, out.c6);

    for (std::size_t i = 0; i + 1 < rs.size(); ++i) {
      const double dr = rs[i + 1] - rs[i];
      const double db = b[i + 1] - b[i];
      const double scale = 1e-12 * std::max({1.0, std::abs(b[i]), std::abs(b[i + 1])});
      if (db < -scale) row.monotone = false;
      if (std::abs(db) > dr / lambda * (1.0 + 1e-9) + scale) row.lipschitz = false;
      if (std::abs(j[i + 1] - j[i]) > dr * (1.0 + 1e-9) + 1e-14) row.nonexpansive = false;
    }
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const double r = rs[i];
      const double env = moreau_yosida(g, lambda, r);
      const double base = g.primitive(r);
      if (!(env >= -1e-14) || env > base + 1e-12 * std::max(1.0, std::abs(base))) row.envelope_order = false;

      bool near = r - 2.0 * opt.fd_step < opt.r_min || r + 2.0 * opt.fd_step > opt.r_max;
      for (double k : kinks) near = near || std::abs(r - k) < opt.kink_gap;
      if (near) continue;
      const double h = opt.fd_step;
      // centered differences at h and 2h, combined to fourth order
      const double d1 = (moreau_yosida(g, lambda, r + h) - moreau_yosida(g, lambda, r - h)) / (2.0 * h);
      const double d2 = (moreau_yosida(g, lambda, r + 2.0 * h) - moreau_yosida(g, lambda, r - 2.0 * h)) / (4.0 * h);
      const double fd = (4.0 * d1 - d2) / 3.0;
      const double err = std::abs(fd - b[i]) / std::max(1.0, std::abs(b[i]));
      row.max_fd_error = std::max(row.max_fd_error, err);
      ++row.fd_points;
      if (!(err <= opt.fd_tol)) row.derivative = false;
    }
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace chlimit
