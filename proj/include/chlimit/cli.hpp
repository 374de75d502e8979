#pragma once

// Command-line front end: graphs-check, simulate, sweep.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "chlimit/config.hpp"
#include "chlimit/graphs_check.hpp"
#include "chlimit/harness.hpp"
#include "chlimit/solver.hpp"

namespace chlimit {

enum ExitCode : int { kExitOk = 0, kExitFail = 1, kExitConfig = 2, kExitNumerical = 3 };

struct CliOptions {
  std::string out = "out";
  unsigned threads = 1;
  bool quiet = false;
  std::vector<std::string> overrides;
};

namespace detail {

inline std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

inline const char* flag(bool ok) { return ok ? "ok" : "FAIL"; }

inline RunConfig load_run_config(const std::string& path, const CliOptions& opt) {
  Config cfg = Config::load(path);
  for (const auto& s : opt.overrides) cfg.set(s);
  return resolve_config(cfg);
}

}  // namespace detail

inline int cmd_graphs_check(std::vector<std::string> names, const CliOptions& opt, std::ostream& out,
                            std::ostream& err) {
  if (names.empty() || (names.size() == 1 && names[0] == "all")) names = MonotoneGraph::names();
  std::vector<MonotoneGraph> graphs;
  for (const auto& n : names) graphs.push_back(MonotoneGraph::from_name(n, GraphParams{}));
  (void)err;
  bool all = true;
  for (const auto& g : graphs) {
    const GraphCheck c = check_graph(g);
    all = all && c.pass();
    if (!opt.quiet) {
      out << "graph " << c.name << ": coercive flag " << (c.coercive_flag ? "true" : "false") << ", sampled c1 "
          << detail::fmt("%.4g", c.c1_small) << " (R=1e2) " << detail::fmt("%.4g", c.c1_large) << " (R=1e4) "
          << detail::flag(c.coercivity_consistent()) << ", c6 " << detail::fmt("%.4g", c.c6) << '\n';
      out << "  lambda     monotone lipschitz nonexpansive envelope derivative coercivity max_fd_err\n";
      for (const auto& r : c.rows) {
        char line[160];
        std::snprintf(line, sizeof line, "  %-10.0e %-8s %-9s %-12s %-8s %-10s %-10s %.2e\n", r.lambda,
                      detail::flag(r.monotone), detail::flag(r.lipschitz), detail::flag(r.nonexpansive),
                      detail::flag(r.envelope_order), detail::flag(r.derivative), detail::flag(r.coercivity),
                      r.max_fd_error);
        out << line;
      }
    }
    out << c.name << ": " << (c.pass() ? "PASS" : "FAIL") << '\n';
  }
  return all ? kExitOk : kExitNumerical;
}

inline int cmd_simulate(const std::string& path, const CliOptions& opt, std::ostream& out, std::ostream& err) {
  const RunConfig run = detail::load_run_config(path, opt);
  const ProblemSpec& spec = run.spec;
  const Trajectory traj = simulate(spec);
  write_trajectory(traj, opt.out, run.snapshot_stride);
  const EnergyReport energy = energy_report(traj, spec);
  if (!opt.quiet) {
    out << "simulate: graph=" << spec.graph.name() << " eps=" << format_double(spec.eps)
        << " lambda=" << detail::fmt("%.6g", traj.lambda) << " steps=" << traj.steps() << " n=" << spec.grid.cells << '\n';
    out << "mass_drift=" << detail::fmt("%.3e", traj.mass_drift()) << '\n';
    if (energy.applicable) {
      out << "energy " << (energy.non_increasing ? "non-increasing" : "INCREASED") << " (max step increase "
          << detail::fmt("%.3e", energy.max_increase) << ")\n";
    } else {
      out << "energy check not applicable (time-dependent data)\n";
    }
    out << "wrote " << (std::filesystem::path(opt.out) / "trajectory.csv").string() << '\n';
  }
  if (run.heat_oracle) {
    const Field exact = heat_exact(spec.grid, *run.cosine_u0, traj.times.back());
    out << "max_err=" << detail::fmt("%.6e", (traj.u.back() - exact).max_abs()) << '\n';
  }
  (void)err;
  return kExitOk;
}

inline int cmd_sweep(const std::string& path, const CliOptions& opt, std::ostream& out, std::ostream& err) {
  const RunConfig run = detail::load_run_config(path, opt);
  SweepOptions so;
  so.threads = opt.threads;
  const SweepReport rep = run_sweep(run.spec, run.sweep_eps, so);
  std::filesystem::create_directories(opt.out);
  write_sweep_csv(rep, std::filesystem::path(opt.out) / "sweep.csv");
  write_sweep_svg(rep, std::filesystem::path(opt.out) / "sweep.svg");

  bool any_failed = false;
  for (const auto& r : rep.rows) any_failed = any_failed || r.failed;
  const auto lip = lipschitz_xi_check(rep, run.spec.graph);

  if (!opt.quiet) {
    out << "sweep: graph=" << run.spec.graph.name() << " regime=" << (rep.regime == Regime::A6 ? "A6" : "A4")
        << " n=" << run.spec.grid.cells << " tau=" << format_double(run.spec.tau)
        << " T=" << format_double(run.spec.T) << '\n';
    out << "  eps          E1           E2           E1+E2        running slope\n";
    for (const auto& r : rep.rows) {
      if (r.failed) {
        out << "  " << detail::fmt("%-12.4e", r.eps) << " run failed: " << r.failure << '\n';
        continue;
      }
      char line[160];
      std::snprintf(line, sizeof line, "  %-12.4e %-12.4e %-12.4e %-12.4e %.4f\n", r.eps, r.E1, r.E2, r.E_total,
                    r.slope_running);
      out << line;
    }
    out << "bounds (slope >= -0.05):";
    for (std::size_t j = 0; j < kBoundCount; ++j) {
      out << " m" << j + 1 << '='
          << (rep.bounds.slopes[j] ? detail::fmt("%.4f", *rep.bounds.slopes[j]) : std::string("n/a")) << ' '
          << detail::flag(rep.bounds.pass[j]);
    }
    out << '\n';
    out << "vanishing terms: eps|u|_V decreasing " << detail::flag(rep.vanishing.eps_term_decreasing)
        << ", |pi(u)|_H decreasing " << detail::flag(rep.vanishing.pi_term_decreasing) << ", pi order "
        << (rep.vanishing.pi_fit ? detail::fmt("%.4f", rep.vanishing.pi_fit->slope) : std::string("n/a")) << ' '
        << detail::flag(rep.vanishing.pi_order_ok) << '\n';
    if (lip) {
      out << "lipschitz xi check (C_beta=" << format_double(lip->c_beta) << "): " << detail::flag(lip->all_pass)
          << '\n';
    } else {
      out << "lipschitz xi check: skipped (graph not Lipschitz)\n";
    }
    out << "duality pairing E2 >= 0: " << detail::flag(rep.duality_nonnegative) << '\n';
    for (const auto& note : rep.notes) out << "note: " << note << '\n';
  }
  bool pass = rep.bounds.all_pass && rep.vanishing.pass() && rep.duality_nonnegative && (!lip || lip->all_pass);
  if (rep.insufficient_points) {
    out << "insufficient points: " << rep.rows.size() << " eps value(s), no rate fitted\n";
  } else {
    pass = pass && rep.rate_pass;
    out << "RATE p=" << detail::fmt("%.4f", rep.fit->slope) << " (threshold " << detail::fmt("%.4f", rep.threshold)
        << ") " << (rep.rate_pass ? "PASS" : "FAIL") << '\n';
  }
  if (any_failed) {
    err << "error: at least one sweep member failed\n";
    return kExitNumerical;
  }
  return pass ? kExitOk : kExitFail;
}

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Cahn-Hilliard relaxation of nonlinear diffusion: property checks, simulations, eps sweeps"};
  app.require_subcommand(1);
  app.fallthrough();
  CliOptions opt;
  app.add_option("--out", opt.out, "Output directory");
  app.add_option("--threads", opt.threads, "Worker threads for sweeps")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", opt.quiet, "Only print result lines");
  app.add_option("--set", opt.overrides, "Override a config entry, key=value (repeatable)");

  std::vector<std::string> names;
  std::string config_path;
  auto* gc = app.add_subcommand("graphs-check", "Run the property battery on catalog graphs");
  gc->add_option("graphs", names, "Graph names or 'all'");
  auto* sim = app.add_subcommand("simulate", "Run one simulation from a config file");
  sim->add_option("config", config_path, "Config file")->required();
  auto* sw = app.add_subcommand("sweep", "Run an eps sweep from a config file");
  sw->add_option("config", config_path, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return kExitConfig;
  }

  try {
    if (*gc) return cmd_graphs_check(names, opt, out, err);
    if (*sim) return cmd_simulate(config_path, opt, out, err);
    return cmd_sweep(config_path, opt, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParameterError& e) {
    err << "parameter error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PreconditionError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace chlimit
