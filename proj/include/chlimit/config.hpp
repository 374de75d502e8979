#pragma once

// Flat `key = value` experiment configs with `#` comments and a closed key set.

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "chlimit/data.hpp"
#include "chlimit/error.hpp"
#include "chlimit/field.hpp"
#include "chlimit/graphs.hpp"
#include "chlimit/solver.hpp"

namespace chlimit {

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> kKeys = {
      "graph.kind",        "graph.ks",          "graph.kl",          "graph.latent",        "graph.q",
      "graph.alpha",       "graph.thetac",      "perturbation.kind", "data.regime",         "data.g",
      "data.h_left",       "data.h_right",      "data.u0",           "solver.eps",          "solver.lambda",
      "solver.tau",        "solver.T",          "solver.n",          "solver.length",       "solver.lambda_cap",
      "solver.kappa",      "solver.limit_lambda", "solver.residual_tol", "solver.max_newton", "solver.tau_min",
      "output.snapshot_stride", "sweep.eps"};
  return kKeys;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace detail

class Config {
 public:
  struct Entry {
    std::string value;
    std::string origin;  // "file:line" or "--set"
  };

  static Config parse(std::istream& in, const std::string& source = "<config>") {
    Config cfg;
    cfg.source_ = source;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const std::string origin = source + ":" + std::to_string(number);
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ": expected 'key = value', got '" + line + "'");
      cfg.insert(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), origin, true);
    }
    return cfg;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    Config cfg = parse(in, path.string());
    cfg.base_dir_ = path.parent_path();
    return cfg;
  }

  /// Applies a `key=value` override; later overrides win.
  void set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set: expected key=value, got '" + assignment + "'");
    insert(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)), "--set", false);
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second.value;
  }

  std::string require_string(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(source_ + ": missing required key '" + key + "'");
    return it->second.value;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    return parse_double(it->second.value, key, it->second.origin);
  }

  long get_int(const std::string& key, long fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const double v = parse_double(it->second.value, key, it->second.origin);
    if (v != std::floor(v) || std::abs(v) > 1e15) {
      throw ConfigError(it->second.origin + ": key '" + key + "' expects an integer, got '" + it->second.value + "'");
    }
    return static_cast<long>(v);
  }

  const std::string& origin(const std::string& key) const {
    static const std::string kNone = "<default>";
    const auto it = entries_.find(key);
    return it == entries_.end() ? kNone : it->second.origin;
  }

  const std::string& source() const { return source_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }

  static double parse_double(const std::string& text, const std::string& key, const std::string& origin) {
    const char* begin = text.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (text.empty() || end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
      throw ConfigError(origin + ": key '" + key + "' expects a number, got '" + text + "'");
    }
    return v;
  }

 private:
  void insert(const std::string& key, const std::string& value, const std::string& origin, bool from_file) {
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(origin + ": unknown key '" + key + "'");
    }
    if (from_file && entries_.count(key)) {
      throw ConfigError(origin + ": duplicate key '" + key + "' (first set at " + entries_[key].origin + ")");
    }
    if (value.empty()) throw ConfigError(origin + ": key '" + key + "' has an empty value");
    entries_[key] = Entry{value, origin};
  }

  std::map<std::string, Entry> entries_;
  std::string source_ = "<config>";
  std::filesystem::path base_dir_;
};

/// Cosine initial datum m0 + amp cos(pi x / L), kept for the heat oracle.
struct CosineDatum {
  double m0 = 0.0;
  double amp = 0.0;
};

struct RunConfig {
  ProblemSpec spec;
  std::vector<double> sweep_eps;
  std::size_t snapshot_stride = 0;
  std::optional<CosineDatum> cosine_u0;
  bool heat_oracle = false;  // linear graph, eps = 0, zero data, cosine u0: exact solution known
};

/// Default sweep: eps = 2^-3, ..., 2^-9.
inline std::vector<double> default_sweep_eps() {
  std::vector<double> out;
  for (int k = 3; k <= 9; ++k) out.push_back(std::ldexp(1.0, -k));
  return out;
}

namespace detail {

inline std::filesystem::path resolve_path(const Config& cfg, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !cfg.base_dir().empty()) path = cfg.base_dir() / path;
  return path;
}

inline std::vector<double> parse_numbers(const Config& cfg, const std::string& key, const std::string& list,
                                         std::size_t count) {
  const auto parts = split(list, ',');
  if (parts.size() != count) {
    throw ConfigError(cfg.origin(key) + ": key '" + key + "' expects " + std::to_string(count) +
                      " comma-separated numbers, got '" + list + "'");
  }
  std::vector<double> out;
  for (const auto& p : parts) out.push_back(Config::parse_double(p, key, cfg.origin(key)));
  return out;
}

inline std::pair<std::string, std::string> split_kind(const std::string& value) {
  const auto colon = value.find(':');
  if (colon == std::string::npos) return {value, {}};
  return {trim(value.substr(0, colon)), trim(value.substr(colon + 1))};
}

inline Field read_config_field(const Config& cfg, const std::string& key, const std::string& path, const Grid& grid) {
  try {
    return read_field_csv(grid, resolve_path(cfg, path).string());
  } catch (const Error& err) {
    throw ConfigError(cfg.origin(key) + ": key '" + key + "': " + err.what());
  }
}

}  // namespace detail

inline RunConfig resolve_config(const Config& cfg) {
  RunConfig run;
  ProblemSpec& spec = run.spec;

  GraphParams gp;
  gp.ks = cfg.get_double("graph.ks", gp.ks);
  gp.kl = cfg.get_double("graph.kl", gp.kl);
  gp.latent = cfg.get_double("graph.latent", gp.latent);
  gp.alpha = cfg.get_double("graph.alpha", gp.alpha);
  gp.thetac = cfg.get_double("graph.thetac", gp.thetac);
  std::optional<double> q;
  if (cfg.has("graph.q")) q = cfg.get_double("graph.q", 0.0);
  const std::string kind = cfg.require_string("graph.kind");
  try {
    spec.graph = MonotoneGraph::from_name(kind, gp, q);
  } catch (const ConfigError& err) {
    throw ConfigError(cfg.origin("graph.kind") + ": " + err.what());
  } catch (const Error& err) {
    throw ConfigError(cfg.origin("graph.kind") + ": invalid graph parameters: " + err.what());
  }

  const std::string pert = cfg.get_string("perturbation.kind", "default");
  if (pert == "default") {
    spec.perturbation = Perturbation::for_graph(spec.graph);
  } else if (pert == "none") {
    spec.perturbation = Perturbation::none();
  } else {
    throw ConfigError(cfg.origin("perturbation.kind") + ": perturbation.kind must be 'default' or 'none', got '" +
                      pert + "'");
  }

  const long n = cfg.get_int("solver.n", 128);
  const double length = cfg.get_double("solver.length", 1.0);
  if (n < 4) throw ConfigError(cfg.origin("solver.n") + ": solver.n must be at least 4");
  if (!(length > 0.0)) throw ConfigError(cfg.origin("solver.length") + ": solver.length must be positive");
  const Grid grid(length, static_cast<std::size_t>(n));
  spec.grid = grid;

  spec.eps = cfg.get_double("solver.eps", 0.0);
  spec.lambda = cfg.get_double("solver.lambda", 0.0);
  spec.tau = cfg.get_double("solver.tau", 1e-3);
  spec.T = cfg.get_double("solver.T", 0.1);
  spec.settings.lambda_cap = cfg.get_double("solver.lambda_cap", spec.settings.lambda_cap);
  spec.settings.kappa = cfg.get_double("solver.kappa", spec.settings.kappa);
  spec.settings.limit_lambda = cfg.get_double("solver.limit_lambda", spec.settings.limit_lambda);
  spec.settings.residual_tol = cfg.get_double("solver.residual_tol", spec.settings.residual_tol);
  spec.settings.max_newton = static_cast<int>(cfg.get_int("solver.max_newton", spec.settings.max_newton));
  spec.settings.tau_min = cfg.get_double("solver.tau_min", spec.settings.tau_min);

  // data
  const std::string regime_text = cfg.get_string("data.regime", "A4");
  Regime regime;
  if (regime_text == "A4") {
    regime = Regime::A4;
  } else if (regime_text == "A6") {
    regime = Regime::A6;
  } else {
    throw ConfigError(cfg.origin("data.regime") + ": data.regime must be 'A4' or 'A6', got '" + regime_text + "'");
  }
  const auto [g_kind, g_arg] = detail::split_kind(cfg.get_string("data.g", "zero"));
  Field g(grid);
  if (g_kind == "zero") {
  } else if (g_kind == "cosine") {
    const double amp = g_arg.empty() ? 1.0 : Config::parse_double(g_arg, "data.g", cfg.origin("data.g"));
    g = Field::sample(grid, [&](double x) { return amp * std::cos(M_PI * x / length); });
  } else if (g_kind == "custom-csv") {
    g = detail::read_config_field(cfg, "data.g", g_arg, grid);
  } else {
    throw ConfigError(cfg.origin("data.g") + ": data.g must be zero, cosine[:amp] or custom-csv:<path>");
  }
  const double h_left = cfg.get_double("data.h_left", 0.0);
  const double h_right = cfg.get_double("data.h_right", 0.0);
  spec.src = SourceData::constant(std::move(g), h_left, h_right, regime);

  const auto [u_kind, u_arg] = detail::split_kind(cfg.require_string("data.u0"));
  Field u0(grid);
  if (u_kind == "constant") {
    const double c = detail::parse_numbers(cfg, "data.u0", u_arg, 1)[0];
    u0 = Field::sample(grid, [c](double) { return c; });
  } else if (u_kind == "cosine") {
    const auto v = detail::parse_numbers(cfg, "data.u0", u_arg, 2);
    run.cosine_u0 = CosineDatum{v[0], v[1]};
    u0 = Field::sample(grid, [&](double x) { return v[0] + v[1] * std::cos(M_PI * x / length); });
  } else if (u_kind == "step") {
    const auto v = detail::parse_numbers(cfg, "data.u0", u_arg, 2);
    u0 = Field::sample(grid, [&](double x) { return x < 0.5 * length ? v[0] : v[1]; });
  } else if (u_kind == "custom-csv") {
    u0 = detail::read_config_field(cfg, "data.u0", u_arg, grid);
  } else {
    throw ConfigError(cfg.origin("data.u0") + ": data.u0 must be constant:<c>, cosine:<m0>,<amp>, step:<a>,<b> or "
                      "custom-csv:<path>");
  }
  spec.init = InitialData(std::move(u0));

  const long stride = cfg.get_int("output.snapshot_stride", 0);
  if (stride < 0) throw ConfigError(cfg.origin("output.snapshot_stride") + ": snapshot stride must be >= 0");
  run.snapshot_stride = static_cast<std::size_t>(stride);

  const std::string eps_text = cfg.get_string("sweep.eps", "default");
  if (eps_text == "default") {
    run.sweep_eps = default_sweep_eps();
  } else {
    for (const auto& item : detail::split(eps_text, ',')) {
      run.sweep_eps.push_back(Config::parse_double(item, "sweep.eps", cfg.origin("sweep.eps")));
    }
  }

  run.heat_oracle = spec.graph.kind() == GraphKind::Linear && spec.eps == 0.0 && run.cosine_u0 &&
                    spec.src.identically_zero();

  spec.validate();
  return run;
}

/// Exact solution m0 + amp exp(-pi^2 t / L^2) cos(pi x / L) of the heat equation on (0, L).
inline Field heat_exact(const Grid& grid, const CosineDatum& c, double t) {
  const double k = M_PI / grid.length;
  return Field::sample(grid, [&](double x) { return c.m0 + c.amp * std::exp(-k * k * t) * std::cos(k * x); });
}

}  // namespace chlimit
