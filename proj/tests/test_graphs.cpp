#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "chlimit/graphs.hpp"
#include "chlimit/graphs_check.hpp"

using namespace chlimit;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

// Reference formulas written out independently of the library, default parameters.
struct Reference {
  std::function<double(double)> beta;     // single-valued branch, +-inf outside the domain
  std::function<double(double)> betahat;  // +inf outside the domain
  double lo, hi;                          // closure of the domain
};

Reference reference(const std::string& name) {
  if (name == "stefan") {
    return {[](double s) { return s < 0 ? s : (s <= 1 ? 0.0 : s - 1); },
            [](double s) { return s < 0 ? 0.5 * s * s : (s <= 1 ? 0.0 : 0.5 * (s - 1) * (s - 1)); }, -inf, inf};
  }
  if (name == "porous") {
    return {[](double s) { return s * std::abs(s); }, [](double s) { return std::abs(s * s * s) / 3; }, -inf, inf};
  }
  if (name == "heleshaw") {
    return {[](double) { return 0.0; }, [](double s) { return (s < 0 || s > 1) ? inf : 0.0; }, 0.0, 1.0};
  }
  if (name == "log") {
    return {[](double s) { return std::abs(s) * std::log((1 + s) / (1 - s)); },
            [](double s) {
              const double a = std::abs(s);
              if (a > 1) return inf;
              if (a == 1) return 1.0;
              return (a * a - 1) * 0.5 * std::log((1 + a) / (1 - a)) + a;
            },
            -1.0, 1.0};
  }
  if (name == "penrose") {
    // theta_c = L = 1
    auto branch = [](double v) { return v - std::log(v + 1); };
    return {[](double s) { return s < 0 ? s / (s + 1) : (s <= 1 ? 0.0 : (s - 1) / s); },
            [branch](double s) {
              if (s <= -1) return inf;
              if (s < 0) return branch(s);
              if (s <= 1) return 0.0;
              return branch(s - 1);
            },
            -1.0, inf};
  }
  if (name == "fast") {
    return {[](double s) { return s == 0 ? 0.0 : std::copysign(std::sqrt(std::abs(s)), s); },
            [](double s) { return std::pow(std::abs(s), 1.5) / 1.5; }, -inf, inf};
  }
  return {[](double s) { return s; }, [](double s) { return 0.5 * s * s; }, -inf, inf};
}

// s + lambda*beta(s) = r by bisection, with J(r) between 0 and r.
double bisect_resolvent(const Reference& ref, double lambda, double r) {
  double a = std::max(std::min(0.0, r), ref.lo), b = std::min(std::max(0.0, r), ref.hi);
  for (int k = 0; k < 200; ++k) {
    const double m = 0.5 * (a + b);
    double phi;
    if (m <= ref.lo) phi = -inf;
    else if (m >= ref.hi) phi = inf;
    else phi = m + lambda * ref.beta(m) - r;
    (phi < 0 ? a : b) = m;
  }
  return 0.5 * (a + b);
}

// inf over s of |r - s|^2 / (2 lambda) + betahat(s), ternary search on the convex objective.
double inf_oracle(const Reference& ref, double lambda, double r) {
  auto obj = [&](double s) { return (r - s) * (r - s) / (2 * lambda) + ref.betahat(s); };
  double a = std::max(std::min(0.0, r), ref.lo), b = std::min(std::max(0.0, r), ref.hi);
  for (int k = 0; k < 300; ++k) {
    const double m1 = a + (b - a) / 3, m2 = b - (b - a) / 3;
    (obj(m1) < obj(m2) ? b : a) = (obj(m1) < obj(m2) ? m2 : m1);
  }
  return std::min({obj(0.5 * (a + b)), obj(a), obj(b)});
}

std::vector<double> sample_points(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> out(n);
  for (double& r : out) r = d(rng);
  return out;
}

}  // namespace

TEST(Resolvent, ClosedFormExamples) {
  EXPECT_DOUBLE_EQ(resolvent(MonotoneGraph::hele_shaw(), 0.5, 1.7), 1.0);
  EXPECT_DOUBLE_EQ(resolvent(MonotoneGraph::linear(), 1.0, 3.0), 1.5);
  EXPECT_NEAR(resolvent(MonotoneGraph::stefan(1, 1, 1), 1.0, 2.0), 1.5, 1e-13);
  EXPECT_NEAR(bisect_resolvent(reference("stefan"), 1.0, 2.0), 1.5, 1e-13);
}

TEST(Resolvent, MatchesBisectionOracleOnAllGraphs) {
  const auto rs = sample_points(400, -4, 4, 7);
  for (const auto& name : MonotoneGraph::names()) {
    const auto g = MonotoneGraph::from_name(name, GraphParams{});
    const auto ref = reference(name);
    for (double lambda : {1e-3, 0.1, 1.0}) {
      for (double r : rs) {
        EXPECT_NEAR(resolvent(g, lambda, r), bisect_resolvent(ref, lambda, r), 1e-12)
            << name << " lambda=" << lambda << " r=" << r;
      }
    }
  }
}

TEST(Resolvent, InvertsOneStepOfTheGraph) {
  // J(r + lambda b) = r for b in beta(r), at points where beta is smooth
  for (const auto& name : MonotoneGraph::names()) {
    const auto g = MonotoneGraph::from_name(name, GraphParams{});
    const auto ref = reference(name);
    for (double r : {-0.7, -0.3, 0.2, 0.45, 0.8, 1.6, 3.0}) {
      if (!(r > ref.lo && r < ref.hi)) continue;
      bool kink = false;
      for (double k : g.kinks()) kink = kink || std::abs(r - k) < 1e-12;
      if (kink) continue;
      for (double lambda : {1e-2, 0.5}) {
        EXPECT_NEAR(resolvent(g, lambda, r + lambda * ref.beta(r)), r, 1e-12) << name;
      }
    }
  }
}

TEST(Resolvent, RejectsNonpositiveLambda) {
  EXPECT_THROW(resolvent(MonotoneGraph::linear(), 0.0, 1.0), ParameterError);
  EXPECT_THROW(yosida(MonotoneGraph::linear(), -1.0, 1.0), ParameterError);
  EXPECT_THROW(moreau_yosida(MonotoneGraph::linear(), std::nan(""), 1.0), ParameterError);
}

TEST(Yosida, Examples) {
  EXPECT_NEAR(yosida(MonotoneGraph::hele_shaw(), 0.5, 1.7), 1.4, 1e-14);
  EXPECT_NEAR(yosida(MonotoneGraph::fast_diffusion(0.0), 0.1, 0.05), 0.5, 1e-14);
  EXPECT_NEAR(yosida(MonotoneGraph::fast_diffusion(0.0), 0.1, 0.3), 1.0, 1e-14);
  for (const auto& name : MonotoneGraph::names()) {
    const auto g = MonotoneGraph::from_name(name, GraphParams{});
    for (double lambda : {1e-4, 1e-2, 1.0}) EXPECT_EQ(yosida(g, lambda, 0.0), 0.0) << name;
  }
}

TEST(Yosida, ConvergesToMinimalSectionAsLambdaShrinks) {
  const auto g = MonotoneGraph::porous_medium(2.0);
  for (double r : {-1.5, 0.4, 2.0}) {
    const double target = r * std::abs(r);
    EXPECT_NEAR(yosida(g, 1e-8, r), target, 1e-6 * std::max(1.0, std::abs(target)));
  }
  // outside D(beta) the Yosida approximation blows up like the distance over lambda
  EXPECT_NEAR(yosida(MonotoneGraph::hele_shaw(), 1e-6, 1.2), 0.2 / 1e-6, 1e-3);
}

TEST(MoreauYosida, Examples) {
  EXPECT_NEAR(moreau_yosida(MonotoneGraph::hele_shaw(), 0.5, 1.7), 0.49, 1e-14);
  EXPECT_NEAR(moreau_yosida(MonotoneGraph::linear(), 1.0, 2.0), 1.0, 1e-14);
  EXPECT_NEAR(inf_oracle(reference("heleshaw"), 0.5, 1.7), 0.49, 1e-12);
  EXPECT_NEAR(inf_oracle(reference("linear"), 1.0, 2.0), 1.0, 1e-12);
  for (const auto& name : MonotoneGraph::names()) {
    const auto g = MonotoneGraph::from_name(name, GraphParams{});
    EXPECT_EQ(moreau_yosida(g, 0.1, 0.0), 0.0) << name;
  }
}

TEST(MoreauYosida, MatchesInfConvolutionOracle) {
  const auto rs = sample_points(200, -3, 3, 11);
  for (const auto& name : MonotoneGraph::names()) {
    const auto g = MonotoneGraph::from_name(name, GraphParams{});
    const auto ref = reference(name);
    for (double lambda : {1e-2, 0.1, 1.0}) {
      for (double r : rs) {
        const double want = inf_oracle(ref, lambda, r);
        EXPECT_NEAR(moreau_yosida(g, lambda, r), want, 1e-10 * std::max(1.0, want))
            << name << " lambda=" << lambda << " r=" << r;
      }
    }
  }
}

TEST(Graphs, PrimitiveMatchesReference) {
  for (const auto& name : MonotoneGraph::names()) {
    const auto g = MonotoneGraph::from_name(name, GraphParams{});
    const auto ref = reference(name);
    EXPECT_EQ(g.primitive(0.0), 0.0) << name;
    for (double s = -2.0; s <= 2.0; s += 0.0625) {
      const double want = ref.betahat(s);
      if (std::isinf(want)) {
        EXPECT_TRUE(std::isinf(g.primitive(s))) << name << " s=" << s;
      } else {
        EXPECT_NEAR(g.primitive(s), want, 1e-13 * std::max(1.0, want)) << name << " s=" << s;
      }
    }
  }
}

TEST(Graphs, LogPrimitiveIsSmoothAcrossSeriesSwitch) {
  const auto g = MonotoneGraph::logarithmic();
  const auto ref = reference("log");
  for (double s : {1e-6, 1e-3, 0.05, 0.0999999, 0.1, 0.1000001, 0.3, 0.999, 1.0}) {
    EXPECT_NEAR(g.primitive(s), ref.betahat(s), 1e-15 + 1e-13 * ref.betahat(s)) << s;
    EXPECT_DOUBLE_EQ(g.primitive(-s), g.primitive(s));
  }
  // derivative of the primitive is beta
  for (double s : {0.05, 0.1, 0.5, 0.9}) {
    const double h = 1e-6;
    EXPECT_NEAR((g.primitive(s + h) - g.primitive(s - h)) / (2 * h), ref.beta(s), 1e-8);
  }
}

TEST(Graphs, ZeroInBetaOfZeroAndNonnegativePrimitive) {
  for (const auto& name : MonotoneGraph::names()) {
    const auto g = MonotoneGraph::from_name(name, GraphParams{});
    ASSERT_TRUE(g.minimal_section(0.0).has_value()) << name;
    EXPECT_EQ(*g.minimal_section(0.0), 0.0) << name;
    for (double s = -3; s <= 3; s += 0.1) EXPECT_GE(g.primitive(s), 0.0) << name;
  }
  EXPECT_EQ(*MonotoneGraph::fast_diffusion(0.0).minimal_section(0.0), 0.0);
}

TEST(Graphs, CoercivityFlagsAndGrowth) {
  for (const auto& name : {"stefan", "porous", "heleshaw", "log", "linear"}) {
    EXPECT_TRUE(MonotoneGraph::from_name(name, GraphParams{}).coercive()) << name;
  }
  const auto pf = MonotoneGraph::penrose_fife();
  const auto fd = MonotoneGraph::fast_diffusion(0.5);
  EXPECT_FALSE(pf.coercive());
  EXPECT_FALSE(fd.coercive());
  // no c1 > 0 survives: betahat(r)/r^2 -> 0 along r -> +inf
  for (const auto* g : {&pf, &fd}) {
    EXPECT_LT(g->primitive(1e6) / 1e12, 1e-3);
    EXPECT_LT(g->primitive(1e8) / 1e16, g->primitive(1e6) / 1e12);
  }
  // the coercive catalog satisfies betahat(r) >= c1 r^2 - c2 with an explicit pair
  const auto st = MonotoneGraph::stefan();
  for (double r = -1e4; r <= 1e4; r += 7.3) EXPECT_GE(st.primitive(r), 0.25 * r * r - 1.0);
  const auto pm = MonotoneGraph::porous_medium(2.0);
  for (double r = -1e4; r <= 1e4; r += 7.3) EXPECT_GE(pm.primitive(r), 0.25 * r * r - 1.0);
}

TEST(Graphs, FromNameAndParameterErrors) {
  try {
    MonotoneGraph::from_name("bogus", GraphParams{});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& n : MonotoneGraph::names()) EXPECT_NE(msg.find(n), std::string::npos) << n;
  }
  EXPECT_THROW(MonotoneGraph::porous_medium(1.0), ParameterError);
  EXPECT_THROW(MonotoneGraph::fast_diffusion(1.0), ParameterError);
  EXPECT_THROW(MonotoneGraph::stefan(0.0, 1.0, 1.0), ParameterError);
  EXPECT_THROW(MonotoneGraph::logarithmic(-1.0), ParameterError);
  EXPECT_THROW(MonotoneGraph::penrose_fife(1.0, 0.0), ParameterError);
  EXPECT_EQ(MonotoneGraph::names().size(), 7u);
}

TEST(Graphs, LipschitzConstants) {
  EXPECT_EQ(MonotoneGraph::stefan(2.0, 3.0, 1.0).lipschitz_constant(), 3.0);
  EXPECT_EQ(MonotoneGraph::linear().lipschitz_constant(), 1.0);
  EXPECT_FALSE(MonotoneGraph::hele_shaw().lipschitz_constant().has_value());
  EXPECT_FALSE(MonotoneGraph::porous_medium().lipschitz_constant().has_value());
}

TEST(Perturbation, Examples) {
  const auto st = Perturbation::for_graph(MonotoneGraph::stefan(1, 1, 1));
  EXPECT_DOUBLE_EQ(perturbation_value(st, 0.5, 2.0), -0.25);
  EXPECT_DOUBLE_EQ(perturbation_value(st, 0.5, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(perturbation_value(st, 0.5, -1.0), 0.25);
  const auto pm = Perturbation::for_graph(MonotoneGraph::porous_medium());
  EXPECT_DOUBLE_EQ(perturbation_value(pm, 0.3, 2.0), -0.6);
  const auto hs = Perturbation::for_graph(MonotoneGraph::hele_shaw());
  EXPECT_DOUBLE_EQ(perturbation_value(hs, 0.2, 0.5), 0.0);
  const auto lg = Perturbation::for_graph(MonotoneGraph::logarithmic(2.0));
  EXPECT_DOUBLE_EQ(perturbation_value(lg, 0.1, 0.5), -0.1);
  EXPECT_EQ(perturbation_value(Perturbation::none(), 0.5, 3.0), 0.0);
}

TEST(Perturbation, RejectsEpsOutOfRange) {
  const auto pm = Perturbation::for_graph(MonotoneGraph::porous_medium());
  EXPECT_THROW(perturbation_value(pm, 0.0, 1.0), ParameterError);
  EXPECT_THROW(perturbation_value(pm, 1.5, 1.0), ParameterError);
  EXPECT_THROW(perturbation_slope(pm, -0.1, 1.0), ParameterError);
  EXPECT_NO_THROW(perturbation_value(pm, 1.0, 1.0));
}

TEST(Perturbation, LipschitzBoundAndPrimitive) {
  for (const auto& name : MonotoneGraph::names()) {
    const auto g = MonotoneGraph::from_name(name, GraphParams{});
    const auto p = Perturbation::for_graph(g);
    for (double eps : {1.0, 0.25, 1e-2, 1e-4}) {
      double lip = 0.0;
      const double h = 1e-3;
      for (double r = -3; r <= 3; r += h) {
        lip = std::max(lip, std::abs(perturbation_value(p, eps, r + h) - perturbation_value(p, eps, r)) / h);
      }
      const double bound = std::abs(perturbation_value(p, eps, 0.0)) + lip;
      EXPECT_LE(bound, p.c3 * p.sigma(eps) * (1 + 1e-9)) << name << " eps=" << eps;
      EXPECT_EQ(perturbation_primitive(p, eps, 0.0), 0.0);
      for (double r : {-1.3, 0.2, 0.7, 2.5}) {
        const double d = 1e-6;
        const double fd = (perturbation_primitive(p, eps, r + d) - perturbation_primitive(p, eps, r - d)) / (2 * d);
        EXPECT_NEAR(fd, perturbation_value(p, eps, r), 1e-8) << name;
      }
    }
  }
}

TEST(Coercivity, Examples) {
  std::vector<double> grid;
  for (int k = 0; k <= 2000; ++k) grid.push_back(-10.0 + 0.01 * k);
  const auto lin = coercivity_margin(MonotoneGraph::linear(), 1.0, 0.0, grid, 1.0);
  EXPECT_EQ(lin.c5, 1.0);
  EXPECT_EQ(lin.c6, 1.0);
  EXPECT_GE(lin.margin, 0.0);

  const auto hs = coercivity_margin(MonotoneGraph::hele_shaw(), 0.1, 0.5, grid);
  EXPECT_EQ(hs.c5, 0.25);
  EXPECT_GE(hs.margin, 0.0);
  // beta_l(r)(r - 1/2) >= |beta_l(r)|/4 everywhere, so no c6 is needed
  EXPECT_LE(hs.c6, 1e-12);

  const std::vector<double> only{0.5};
  const auto single = coercivity_margin(MonotoneGraph::hele_shaw(), 0.1, 0.5, only, 0.7);
  EXPECT_DOUBLE_EQ(single.margin, 0.7);

  EXPECT_THROW(coercivity_margin(MonotoneGraph::hele_shaw(), 0.1, 1.0, grid), PreconditionError);
  EXPECT_THROW(coercivity_margin(MonotoneGraph::logarithmic(), 0.1, -1.5, grid), PreconditionError);
}

TEST(GraphBattery, AllCatalogGraphsPass) {
  for (const auto& name : MonotoneGraph::names()) {
    const auto c = check_graph(MonotoneGraph::from_name(name, GraphParams{}));
    EXPECT_TRUE(c.pass()) << name;
    EXPECT_TRUE(c.coercivity_consistent()) << name;
    ASSERT_EQ(c.rows.size(), 5u);
    for (const auto& r : c.rows) {
      EXPECT_GT(r.fd_points, 9000u) << name;
      EXPECT_LE(r.max_fd_error, 1e-6) << name;
    }
  }
  EXPECT_TRUE(check_graph(MonotoneGraph::fast_diffusion(0.0)).pass());
}

TEST(GraphBattery, KinkListIncludesDomainEnds) {
  const auto hs = yosida_kinks(MonotoneGraph::hele_shaw(), 0.1);
  EXPECT_NE(std::find(hs.begin(), hs.end(), 0.0), hs.end());
  EXPECT_NE(std::find(hs.begin(), hs.end(), 1.0), hs.end());
  const auto lg = yosida_kinks(MonotoneGraph::logarithmic(), 0.1);
  EXPECT_EQ(lg.size(), 2u);
  const auto sg = yosida_kinks(MonotoneGraph::fast_diffusion(0.0), 0.25);
  EXPECT_EQ(sg, (std::vector<double>{-0.25, 0.25}));
  EXPECT_TRUE(yosida_kinks(MonotoneGraph::linear(), 1.0).empty());
}
