#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "chlimit/cli.hpp"

using namespace chlimit;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = CHLIMIT_CONFIG_DIR;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "chlimit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("chlimit_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Config parse(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in, "test.cfg");
}

std::string config_error(const std::string& text) {
  try {
    resolve_config(parse(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const std::string kMinimal = "graph.kind = linear\ndata.u0 = cosine:0.5,0.3\nsolver.n = 16\n";

}  // namespace

TEST(Config, ParsesCommentsAndWhitespace) {
  const Config c = parse("# header\n  graph.kind = stefan   # trailing\n\nsolver.tau=2e-3\n");
  EXPECT_EQ(c.require_string("graph.kind"), "stefan");
  EXPECT_DOUBLE_EQ(c.get_double("solver.tau", 0.0), 2e-3);
  EXPECT_EQ(c.origin("solver.tau"), "test.cfg:4");
  EXPECT_EQ(c.get_string("data.g", "zero"), "zero");
}

TEST(Config, ReportsLineAndKey) {
  auto message = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("graph.kind = linear\nsolver.bogus = 1\n").find("test.cfg:2: unknown key 'solver.bogus'"),
            std::string::npos);
  EXPECT_NE(message("graph.kind linear\n").find("test.cfg:1"), std::string::npos);
  EXPECT_NE(message("solver.n = 4\nsolver.n = 8\n").find("duplicate key"), std::string::npos);
  EXPECT_NE(message("solver.n =\n").find("empty value"), std::string::npos);
}

TEST(Config, OverridesWinAndAreValidated) {
  Config c = parse(kMinimal);
  c.set("solver.n=32");
  EXPECT_EQ(c.get_int("solver.n", 0), 32);
  EXPECT_EQ(c.origin("solver.n"), "--set");
  EXPECT_THROW(c.set("solver.nn=3"), ConfigError);
  EXPECT_THROW(c.set("solver.n"), ConfigError);
}

TEST(Config, ResolveDefaultsAndData) {
  const RunConfig run = resolve_config(parse(kMinimal));
  EXPECT_EQ(run.spec.grid.cells, 16u);
  EXPECT_EQ(run.spec.eps, 0.0);
  EXPECT_EQ(run.spec.tau, 1e-3);
  EXPECT_EQ(run.spec.src.regime(), Regime::A4);
  EXPECT_TRUE(run.heat_oracle);
  ASSERT_TRUE(run.cosine_u0.has_value());
  EXPECT_EQ(run.sweep_eps, default_sweep_eps());
  EXPECT_EQ(run.sweep_eps.size(), 7u);
  EXPECT_DOUBLE_EQ(run.sweep_eps.front(), 0.125);
  EXPECT_DOUBLE_EQ(run.sweep_eps.back(), 1.0 / 512);

  const RunConfig step = resolve_config(parse("graph.kind = heleshaw\ndata.u0 = step:0.2,0.8\nsolver.n = 8\n"));
  EXPECT_EQ(step.spec.init.u0[0], 0.2);
  EXPECT_EQ(step.spec.init.u0[7], 0.8);
  EXPECT_DOUBLE_EQ(step.spec.init.m0, 0.5);
}

TEST(Config, CustomCsvRelativeToConfig) {
  const fs::path dir = scratch_dir("csv");
  fs::create_directories(dir);
  const Grid g(1.0, 8);
  write_field_csv(Field::sample(g, [](double x) { return 0.3 + 0.1 * x; }), (dir / "u0.csv").string());
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "graph.kind = porous\ndata.u0 = custom-csv:u0.csv\nsolver.n = 8\n";
  }
  const RunConfig run = resolve_config(Config::load(dir / "run.cfg"));
  EXPECT_DOUBLE_EQ(run.spec.init.u0[0], 0.3 + 0.1 * g.center(0));
  // wrong cell count
  {
    std::ofstream cfg(dir / "bad.cfg");
    cfg << "graph.kind = porous\ndata.u0 = custom-csv:u0.csv\nsolver.n = 16\n";
  }
  EXPECT_THROW(resolve_config(Config::load(dir / "bad.cfg")), Error);
  fs::remove_all(dir);
}

TEST(Config, ResolveErrors) {
  EXPECT_NE(config_error(kMinimal + "solver.tau = abc\n").find("solver.tau"), std::string::npos);
  EXPECT_NE(config_error(kMinimal + "data.regime = A5\n").find("data.regime"), std::string::npos);
  EXPECT_NE(config_error("graph.kind = bogus\ndata.u0 = constant:1\n").find("heleshaw"), std::string::npos);
  EXPECT_NE(config_error("data.u0 = constant:1\n").find("graph.kind"), std::string::npos);
  EXPECT_NE(config_error(kMinimal + "perturbation.kind = strong\n").find("perturbation.kind"), std::string::npos);
  EXPECT_NE(config_error("graph.kind = porous\ngraph.q = 0.5\ndata.u0 = constant:1\n").find("invalid graph"),
            std::string::npos);
  EXPECT_NE(config_error("graph.kind = linear\ndata.u0 = constant:0.5\nsolver.n = 2.5\n").find("integer"), std::string::npos);
  EXPECT_THROW(resolve_config(parse(kMinimal + "solver.tau = 0\n")), ParameterError);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, kExitConfig);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(cli({"simulate"}).code, kExitConfig);
  EXPECT_EQ(cli({"--threads", "0", "graphs-check"}).code, kExitConfig);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  EXPECT_EQ(cli({"simulate", "/nonexistent/config.cfg"}).code, kExitConfig);
}

TEST(Cli, GraphsCheckSelection) {
  const CliRun one = cli({"graphs-check", "heleshaw"});
  EXPECT_EQ(one.code, kExitOk);
  EXPECT_NE(one.out.find("heleshaw: PASS"), std::string::npos);
  EXPECT_EQ(one.out.find("stefan"), std::string::npos);

  const CliRun quiet = cli({"--quiet", "graphs-check", "linear", "porous"});
  EXPECT_EQ(quiet.out, "linear: PASS\nporous: PASS\n");

  const CliRun bad = cli({"graphs-check", "bogus"});
  EXPECT_EQ(bad.code, kExitConfig);
  for (const auto& n : MonotoneGraph::names()) EXPECT_NE(bad.err.find(n), std::string::npos) << n;
}

TEST(Cli, GraphsCheckAll) {
  const CliRun all = cli({"--quiet", "graphs-check", "all"});
  EXPECT_EQ(all.code, kExitOk);
  for (const auto& n : MonotoneGraph::names()) EXPECT_NE(all.out.find(n + ": PASS"), std::string::npos) << n;
}

TEST(Cli, SimulateHeatOracle) {
  const fs::path out = scratch_dir("heat");
  const CliRun r = cli({"--out", out.string(), "simulate", kConfigs + "/heat_oracle.cfg"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto pos = r.out.find("max_err=");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::strtod(r.out.c_str() + pos + 8, nullptr), 2e-3);
  EXPECT_TRUE(fs::exists(out / "trajectory.csv"));
  EXPECT_TRUE(fs::exists(out / "snapshot_0.csv"));
  EXPECT_TRUE(fs::exists(out / "snapshot_1000.csv"));
  fs::remove_all(out);
}

TEST(Cli, SimulateRejectsBadParameters) {
  const fs::path out = scratch_dir("badparam");
  const std::string cfg = kConfigs + "/heat_oracle.cfg";
  EXPECT_EQ(cli({"--out", out.string(), "simulate", cfg, "--set", "solver.tau=0"}).code, kExitConfig);
  EXPECT_EQ(cli({"--out", out.string(), "simulate", cfg, "--set", "solver.tau=-1e-3"}).code, kExitConfig);
  const CliRun lam = cli({"--out", out.string(), "simulate", cfg, "--set", "solver.lambda=1e-3"});
  EXPECT_EQ(lam.code, kExitConfig);
  EXPECT_NE(lam.err.find("fixes the lambda floor"), std::string::npos);
  EXPECT_EQ(cli({"--out", out.string(), "simulate", cfg, "--set", "solver.nonsense=1"}).code, kExitConfig);
  fs::remove_all(out);
}

TEST(Cli, SimulateSolverFailureExitsThree) {
  const fs::path out = scratch_dir("fail");
  const CliRun r = cli({"--out", out.string(), "simulate", kConfigs + "/simulate_stefan.cfg", "--set",
                        "solver.max_newton=1", "--set", "solver.residual_tol=1e-300", "--set", "solver.tau_min=1e-3"});
  EXPECT_EQ(r.code, kExitNumerical) << r.out << r.err;
  fs::remove_all(out);
}

TEST(Cli, SweepLinearPasses) {
  const fs::path out = scratch_dir("sweep_linear");
  const CliRun r = cli({"--out", out.string(), "sweep", kConfigs + "/sweep_linear.cfg"});
  ASSERT_EQ(r.code, kExitOk) << r.out << r.err;
  const auto pos = r.out.find("RATE p=");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_GE(std::strtod(r.out.c_str() + pos + 7, nullptr), 0.5);
  EXPECT_NE(r.out.find("PASS", pos), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "sweep.csv"));
  EXPECT_TRUE(fs::exists(out / "sweep.svg"));
  fs::remove_all(out);
}

TEST(Cli, SweepSingleEps) {
  const fs::path out = scratch_dir("single");
  const CliRun r = cli({"--out", out.string(), "sweep", kConfigs + "/sweep_single_eps.cfg"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("insufficient points"), std::string::npos);
  EXPECT_EQ(r.out.find("RATE"), std::string::npos);
  fs::remove_all(out);
}

TEST(Cli, SweepIncompatibleFlux) {
  const fs::path out = scratch_dir("compat");
  const CliRun r = cli({"--out", out.string(), "sweep", kConfigs + "/bad_compatibility.cfg"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("integral"), std::string::npos);
  EXPECT_NE(r.err.find("= 1 "), std::string::npos) << r.err;
  fs::remove_all(out);
}

TEST(Cli, RerunIsByteIdentical) {
  const fs::path out = scratch_dir("idem");
  const std::string cfg = kConfigs + "/sweep_heleshaw.cfg";
  ASSERT_EQ(cli({"--quiet", "--out", out.string(), "sweep", cfg}).code, kExitOk);
  const std::string csv = slurp(out / "sweep.csv"), svg = slurp(out / "sweep.svg");
  ASSERT_EQ(cli({"--quiet", "--threads", "3", "--out", out.string(), "sweep", cfg}).code, kExitOk);
  EXPECT_EQ(slurp(out / "sweep.csv"), csv);
  EXPECT_EQ(slurp(out / "sweep.svg"), svg);
  fs::remove_all(out);
}
