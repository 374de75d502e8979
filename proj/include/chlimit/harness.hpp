#pragma once

// Epsilon sweeps: each relaxed run is compared against the limit solution on
// the same grid and time step, so only the relaxation gap is measured.

#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "chlimit/data.hpp"
#include "chlimit/field.hpp"
#include "chlimit/graphs.hpp"
#include "chlimit/rates.hpp"
#include "chlimit/solver.hpp"

namespace chlimit {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Error functionals between two trajectories on the same time grid.
struct TrajectoryGap {
  double E1 = 0.0;         // max_t |u_a - u_b|^2_{V*}
  double E2 = 0.0;         // int_0^T (xi_a - xi_b, u_a - u_b)_H dt
  double xi_gap_sq = 0.0;  // int_0^T |xi_a - xi_b|^2_H dt
};

inline TrajectoryGap compare_trajectories(const Trajectory& a, const Trajectory& b) {
  if (a.times.size() != b.times.size()) throw PreconditionError("trajectories have different time grids");
  TrajectoryGap gap;
  if (a.u.empty()) return gap;
  const NeumannInverse inverse(a.u.front().grid());
  std::vector<double> pair(a.times.size()), xi_sq(a.times.size());
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    if (std::abs(a.times[k] - b.times[k]) > 1e-12 * std::max(1.0, a.times[k])) {
      throw PreconditionError("trajectories have different time grids");
    }
    const Field du = a.u[k] - b.u[k];
    const Field dxi = a.xi[k] - b.xi[k];
    const double v = norm_Vstar(du, inverse);
    gap.E1 = std::max(gap.E1, v * v);
    pair[k] = inner(dxi, du);
    xi_sq[k] = inner(dxi, dxi);
  }
  for (std::size_t k = 1; k < a.times.size(); ++k) {
    const double dt = a.times[k] - a.times[k - 1];
    gap.E2 += 0.5 * dt * (pair[k] + pair[k - 1]);
    gap.xi_gap_sq += 0.5 * dt * (xi_sq[k] + xi_sq[k - 1]);
  }
  return gap;
}

// ---------------------------------------------------------------------------
// Uniform bounds across eps.

inline constexpr std::size_t kBoundCount = 6;

inline const std::array<const char*, kBoundCount>& bound_names() {
  static const std::array<const char*, kBoundCount> kNames = {
      "int |u'|^2_V*", "eps |grad u|^2", "|u|^2_H", "int |mu|^2_V", "int |xi|^2_H", "int |eps u|^2_W"};
  return kNames;
}

struct BoundRow {
  double eps = 0.0;
  std::array<double, kBoundCount> m{};
};

struct BoundsTable {
  std::vector<BoundRow> rows;
  std::array<std::optional<double>, kBoundCount> slopes{};
  std::array<bool, kBoundCount> pass{};
  bool all_pass = true;
};

/// The six a priori quantities of one trajectory, each as its sup over t.
inline BoundRow bound_quantities(const Trajectory& traj) {
  BoundRow row;
  row.eps = traj.eps;
  if (traj.u.empty()) return row;
  const NeumannInverse inverse(traj.u.front().grid());
  double du_int = 0.0, mu_int = 0.0, xi_int = 0.0, w_int = 0.0;
  for (std::size_t k = 0; k < traj.u.size(); ++k) {
    const Field& u = traj.u[k];
    row.m[1] = std::max(row.m[1], traj.eps * gradient_energy(u));
    row.m[2] = std::max(row.m[2], inner(u, u));
    if (k == 0) continue;
    const double dt = traj.times[k] - traj.times[k - 1];
    const double rate = norm_Vstar((1.0 / dt) * (u - traj.u[k - 1]), inverse);
    du_int += dt * rate * rate;
    const double mv = norm_V(traj.mu[k]);
    mu_int += dt * mv * mv;
    xi_int += dt * inner(traj.xi[k], traj.xi[k]);
    const Field lap = laplacian_neumann(u);
    w_int += dt * traj.eps * traj.eps * inner(lap, lap);
  }
  row.m[0] = du_int;
  row.m[3] = mu_int;
  row.m[4] = xi_int;
  row.m[5] = w_int;
  return row;
}

/// Per-eps bound quantities and their log-log slopes; a slope >= -0.05 means no blow-up.
inline BoundsTable monitor_bounds(const std::vector<const Trajectory*>& runs) {
  BoundsTable table;
  for (const Trajectory* t : runs) table.rows.push_back(bound_quantities(*t));
  for (std::size_t j = 0; j < kBoundCount; ++j) {
    std::vector<std::pair<double, double>> pairs;
    for (const auto& r : table.rows) pairs.emplace_back(r.eps, r.m[j]);
    table.pass[j] = true;
    try {
      const RateFit fit = fit_rate(pairs);
      table.slopes[j] = fit.slope;
      table.pass[j] = fit.slope >= -0.05;
    } catch (const NumericalError&) {
      // fewer than two nonzero entries: nothing can blow up
    }
    for (const auto& r : table.rows) {
      if (!std::isfinite(r.m[j])) table.pass[j] = false;
    }
    table.all_pass = table.all_pass && table.pass[j];
  }
  return table;
}

// ---------------------------------------------------------------------------
// Terms that vanish with eps.

struct VanishingRow {
  double eps = 0.0;
  double eps_u_V = 0.0;  // sup_t eps |u|_V
  double pi_H = 0.0;     // sup_t |pi_eps(u)|_H
};

struct VanishingTable {
  std::vector<VanishingRow> rows;
  bool eps_term_decreasing = true;
  bool pi_term_decreasing = true;
  std::optional<RateFit> eps_fit;
  std::optional<RateFit> pi_fit;
  bool pi_order_ok = true;  // pi-term order >= 1/2 when a fit exists
  bool pass() const { return eps_term_decreasing && pi_term_decreasing && pi_order_ok; }
};

inline VanishingTable vanishing_terms_check(const std::vector<const Trajectory*>& runs, const Perturbation& pert) {
  VanishingTable table;
  for (const Trajectory* t : runs) {
    VanishingRow row;
    row.eps = t->eps;
    for (const Field& u : t->u) {
      row.eps_u_V = std::max(row.eps_u_V, t->eps * norm_V(u));
      if (t->eps > 0.0) {
        Field p(u.grid());
        for (std::size_t i = 0; i < u.size(); ++i) p[i] = perturbation_value(pert, t->eps, u[i]);
        row.pi_H = std::max(row.pi_H, norm_H(p));
      }
    }
    table.rows.push_back(row);
  }
  for (std::size_t k = 1; k < table.rows.size(); ++k) {
    const auto& prev = table.rows[k - 1];
    const auto& cur = table.rows[k];
    if (!(cur.eps_u_V < prev.eps_u_V || (cur.eps_u_V == 0.0 && prev.eps_u_V == 0.0))) {
      table.eps_term_decreasing = false;
    }
    if (!(cur.pi_H < prev.pi_H || (cur.pi_H == 0.0 && prev.pi_H == 0.0))) table.pi_term_decreasing = false;
  }
  std::vector<std::pair<double, double>> eps_pairs, pi_pairs;
  for (const auto& r : table.rows) {
    eps_pairs.emplace_back(r.eps, r.eps_u_V);
    pi_pairs.emplace_back(r.eps, r.pi_H);
  }
  try {
    table.eps_fit = fit_rate(eps_pairs);
  } catch (const NumericalError&) {
  }
  try {
    table.pi_fit = fit_rate(pi_pairs);
    table.pi_order_ok = table.pi_fit->slope >= 0.5;
  } catch (const NumericalError&) {
  }
  return table;
}

// ---------------------------------------------------------------------------

struct SweepOptions {
  unsigned threads = 1;
  // Reference is the relaxed run at this eps instead of the limit problem; it
  // must lie below every sweep member.
  std::optional<double> pseudo_reference_eps;
};

struct SweepRow {
  double eps = 0.0;
  double E1 = kNaN;
  double E2 = kNaN;
  double E_total = kNaN;
  double xi_gap_sq = kNaN;
  double slope_running = kNaN;
  bool failed = false;
  std::string failure;
};

struct SweepReport {
  Regime regime = Regime::A4;
  std::vector<SweepRow> rows;
  Trajectory reference;
  std::vector<std::optional<Trajectory>> runs;
  std::optional<RateFit> fit;
  double threshold = 0.0;
  double theory_order = 0.0;
  bool insufficient_points = false;
  bool rate_pass = false;
  bool duality_nonnegative = true;  // E2 >= -1e-10 for every eps
  BoundsTable bounds;
  VanishingTable vanishing;
  std::vector<std::string> notes;

  std::vector<const Trajectory*> successful_runs() const {
    std::vector<const Trajectory*> out;
    for (const auto& r : runs) {
      if (r) out.push_back(&*r);
    }
    return out;
  }
};

/// Decay order the error estimate guarantees in each data regime.
inline double theory_order(Regime regime) { return regime == Regime::A6 ? 0.5 : 1.0 / 3.0; }

namespace detail {

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

inline SweepReport run_sweep(const ProblemSpec& base, const std::vector<double>& eps_list,
                             const SweepOptions& options = {}) {
  if (eps_list.empty()) throw PreconditionError("run_sweep: empty eps list");
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    if (!(eps_list[k] > 0.0 && eps_list[k] <= 1.0)) throw PreconditionError("run_sweep: eps outside (0, 1]");
    if (k > 0 && !(eps_list[k] < eps_list[k - 1])) {
      throw PreconditionError("run_sweep: eps list must be strictly decreasing");
    }
  }
  SweepReport report;
  report.regime = base.src.regime();
  report.theory_order = theory_order(report.regime);
  report.threshold = report.theory_order - 0.05;

  ProblemSpec limit = base;
  limit.eps = 0.0;
  limit.lambda = 0.0;
  if (options.pseudo_reference_eps) {
    const double e = *options.pseudo_reference_eps;
    if (!(e > 0.0 && e < eps_list.back())) {
      throw PreconditionError("run_sweep: pseudo-reference eps must lie in (0, smallest sweep eps)");
    }
    ProblemSpec ref = base;
    ref.eps = e;
    report.reference = solve_ch_eps(ref);
    report.notes.push_back("reference is the relaxed run at eps = " + format_double(e));
  } else {
    report.reference = solve_limit(limit);
  }

  report.runs.resize(eps_list.size());
  std::vector<std::string> failures(eps_list.size());
  detail::parallel_for(eps_list.size(), options.threads, [&](std::size_t k) {
    ProblemSpec spec = base;
    spec.eps = eps_list[k];
    try {
      report.runs[k] = solve_ch_eps(spec);
    } catch (const Error& err) {
      failures[k] = err.what();
    }
  });

  std::vector<std::pair<double, double>> pairs;
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    SweepRow row;
    row.eps = eps_list[k];
    if (!report.runs[k]) {
      row.failed = true;
      row.failure = failures[k];
      report.notes.push_back("eps = " + format_double(row.eps) + " failed: " + failures[k]);
    } else {
      const TrajectoryGap gap = compare_trajectories(*report.runs[k], report.reference);
      row.E1 = gap.E1;
      row.E2 = gap.E2;
      row.E_total = gap.E1 + gap.E2;
      row.xi_gap_sq = gap.xi_gap_sq;
      if (gap.E2 < -1e-10) report.duality_nonnegative = false;
      pairs.emplace_back(row.eps, row.E_total);
      try {
        row.slope_running = fit_rate(pairs).slope;
      } catch (const NumericalError&) {
      }
    }
    report.rows.push_back(row);
  }
  try {
    report.fit = fit_rate(pairs);
    report.rate_pass = report.fit->slope >= report.threshold;
    for (const auto& w : report.fit->warnings) report.notes.push_back(w);
  } catch (const NumericalError&) {
    report.insufficient_points = true;
    report.notes.push_back("insufficient points for a rate fit");
  }
  const auto ok = report.successful_runs();
  report.bounds = monitor_bounds(ok);
  report.vanishing = vanishing_terms_check(ok, base.perturbation);
  return report;
}

struct LipschitzRow {
  double eps = 0.0;
  double xi_gap_sq = 0.0;
  double E2 = 0.0;
  bool pass = false;
};

struct LipschitzTable {
  double c_beta = 0.0;
  std::vector<LipschitzRow> rows;
  bool all_pass = true;
};

/// For Lipschitz graphs: int |xi_eps - xi|^2_H <= C_beta * E2 + 1e-10. Empty for other graphs.
inline std::optional<LipschitzTable> lipschitz_xi_check(const SweepReport& sweep, const MonotoneGraph& graph) {
  const auto c_beta = graph.lipschitz_constant();
  if (!c_beta) return std::nullopt;
  LipschitzTable table;
  table.c_beta = *c_beta;
  for (const auto& r : sweep.rows) {
    if (r.failed) continue;
    LipschitzRow row{r.eps, r.xi_gap_sq, r.E2, r.xi_gap_sq <= table.c_beta * r.E2 + 1e-10};
    table.all_pass = table.all_pass && row.pass;
    table.rows.push_back(row);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Report output.

inline void write_sweep_csv(const SweepReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "eps,E1,E2,E_total,slope_running";
  for (std::size_t j = 1; j <= kBoundCount; ++j) out << ",bound_m" << j;
  out << '\n';
  std::size_t b = 0;
  for (const auto& row : report.rows) {
    out << format_double(row.eps) << ',' << format_double(row.E1) << ',' << format_double(row.E2) << ','
        << format_double(row.E_total) << ',' << format_double(row.slope_running);
    const bool have = !row.failed && b < report.bounds.rows.size();
    for (std::size_t j = 0; j < kBoundCount; ++j) {
      out << ',' << format_double(have ? report.bounds.rows[b].m[j] : kNaN);
    }
    if (have) ++b;
    out << '\n';
  }
}

namespace detail {
inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}
}  // namespace detail

/// Log-log plot of E1 + E2 against eps with the fitted line and the theoretical guide slope.
inline std::string sweep_svg(const SweepReport& report) {
  const double width = 640, height = 480, left = 80, right = 30, top = 40, bottom = 60;
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : report.rows) {
    if (!r.failed && r.E_total > 0.0) pts.emplace_back(std::log10(r.eps), std::log10(r.E_total));
  }
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (!pts.empty()) {
    xmin = xmax = pts[0].first;
    ymin = ymax = pts[0].second;
    for (const auto& [x, y] : pts) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  xmin = std::floor(xmin);
  xmax = std::ceil(xmax);
  ymin = std::floor(ymin);
  ymax = std::ceil(ymax);
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (width - left - right); };
  auto py = [&](double y) { return height - bottom - (y - ymin) / (ymax - ymin) * (height - top - bottom); };
  using detail::svg_num;

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
  s << "<line x1=\"" << svg_num(left) << "\" y1=\"" << svg_num(height - bottom) << "\" x2=\""
    << svg_num(width - right) << "\" y2=\"" << svg_num(height - bottom) << "\"/>\n";
  s << "<line x1=\"" << svg_num(left) << "\" y1=\"" << svg_num(top) << "\" x2=\"" << svg_num(left) << "\" y2=\""
    << svg_num(height - bottom) << "\"/>\n";
  s << "</g>\n<g font-family=\"sans-serif\" font-size=\"12\" fill=\"black\">\n";
  for (double x = xmin; x <= xmax + 1e-9; x += 1.0) {
    s << "<line x1=\"" << svg_num(px(x)) << "\" y1=\"" << svg_num(height - bottom) << "\" x2=\"" << svg_num(px(x))
      << "\" y2=\"" << svg_num(height - bottom + 5) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << svg_num(px(x)) << "\" y=\"" << svg_num(height - bottom + 20)
      << "\" text-anchor=\"middle\">1e" << static_cast<int>(x) << "</text>\n";
  }
  for (double y = ymin; y <= ymax + 1e-9; y += 1.0) {
    s << "<line x1=\"" << svg_num(left - 5) << "\" y1=\"" << svg_num(py(y)) << "\" x2=\"" << svg_num(left)
      << "\" y2=\"" << svg_num(py(y)) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << svg_num(left - 8) << "\" y=\"" << svg_num(py(y) + 4) << "\" text-anchor=\"end\">1e"
      << static_cast<int>(y) << "</text>\n";
  }
  s << "<text x=\"" << svg_num(0.5 * (left + width - right)) << "\" y=\"" << svg_num(height - 15)
    << "\" text-anchor=\"middle\">eps</text>\n";
  s << "<text x=\"20\" y=\"" << svg_num(0.5 * (top + height - bottom))
    << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " << svg_num(0.5 * (top + height - bottom))
    << ")\">E1 + E2</text>\n";
  s << "</g>\n";
  if (!pts.empty()) {
    s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      s << (i ? " " : "") << svg_num(px(pts[i].first)) << ',' << svg_num(py(pts[i].second));
    }
    s << "\"/>\n";
    for (const auto& [x, y] : pts) {
      s << "<circle cx=\"" << svg_num(px(x)) << "\" cy=\"" << svg_num(py(y)) << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
    }
    // guide line through the largest-eps point with the theoretical slope
    const auto [x0, y0] = pts.front();
    const double x1 = pts.back().first;
    s << "<line x1=\"" << svg_num(px(x0)) << "\" y1=\"" << svg_num(py(y0)) << "\" x2=\"" << svg_num(px(x1))
      << "\" y2=\"" << svg_num(py(y0 + report.theory_order * (x1 - x0)))
      << "\" stroke=\"#d62728\" stroke-dasharray=\"6,4\"/>\n";
    if (report.fit) {
      const double c = std::log10(report.fit->intercept);
      s << "<line x1=\"" << svg_num(px(x0)) << "\" y1=\"" << svg_num(py(c + report.fit->slope * x0)) << "\" x2=\""
        << svg_num(px(x1)) << "\" y2=\"" << svg_num(py(c + report.fit->slope * x1))
        << "\" stroke=\"#2ca02c\" stroke-width=\"1.5\"/>\n";
    }
  }
  s << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<text x=\"" << svg_num(left + 10) << "\" y=\"" << svg_num(top - 15) << "\" fill=\"#2ca02c\">fit slope "
    << (report.fit ? svg_num(report.fit->slope) : std::string("n/a")) << "</text>\n";
  s << "<text x=\"" << svg_num(left + 160) << "\" y=\"" << svg_num(top - 15) << "\" fill=\"#d62728\">guide eps^"
    << (report.regime == Regime::A6 ? "1/2" : "1/3") << "</text>\n";
  s << "</g>\n</svg>\n";
  return s.str();
}

inline void write_sweep_svg(const SweepReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << sweep_svg(report);
}

}  // namespace chlimit
