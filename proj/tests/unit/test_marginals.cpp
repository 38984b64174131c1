#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

#include "anova/marginals.hpp"

using namespace anova;

namespace {

// Midpoint-rule value of int int max_i P_i(min)(1 - P_i(max)) over [lo,hi]^2.
double brute_gamma(const std::vector<std::function<double(double)>>& cdfs, double lo, double hi, int cells) {
  const double h = (hi - lo) / cells;
  std::vector<std::vector<double>> P(cdfs.size(), std::vector<double>(cells));
  for (std::size_t i = 0; i < cdfs.size(); ++i)
    for (int k = 0; k < cells; ++k) P[i][k] = cdfs[i](lo + (k + 0.5) * h);
  double s = 0.0;
  for (int a = 0; a < cells; ++a)
    for (int b = 0; b < cells; ++b) {
      const int mn = std::min(a, b), mx = std::max(a, b);
      double best = 0.0;
      for (std::size_t i = 0; i < cdfs.size(); ++i) best = std::max(best, P[i][mn] * (1.0 - P[i][mx]));
      s += best;
    }
  return s * h * h;
}

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

}  // namespace

TEST(Cdf, KnownValues) {
  EXPECT_DOUBLE_EQ(Marginal::uniform(-1, 1).cdf(0.0), 0.5);
  EXPECT_DOUBLE_EQ(Marginal::normal(0, 1).cdf(0.0), 0.5);
  EXPECT_DOUBLE_EQ(Marginal::uniform(0, 1).cdf(0.25), 0.25);
}

TEST(Cdf, LimitsAndMonotone) {
  for (const auto& m : {Marginal::uniform(-2, 3), Marginal::normal(1, 4),
                        Marginal::empirical({0.1, 0.5, 0.9}, {-1.0, 0.0, 2.0})}) {
    EXPECT_DOUBLE_EQ(m.cdf(-INFINITY), 0.0) << m.describe();
    EXPECT_DOUBLE_EQ(m.cdf(INFINITY), 1.0) << m.describe();
    double prev = 0.0;
    for (double t = -10; t <= 10; t += 0.05) {
      double c = m.cdf(t);
      EXPECT_GE(c, prev - 1e-15);
      EXPECT_GE(m.pdf(t), 0.0);
      prev = c;
    }
  }
}

TEST(Cdf, EmpiricalClampsOutsideTable) {
  auto m = Marginal::empirical({0.1, 0.5, 0.9}, {-1.0, 0.0, 2.0});
  EXPECT_DOUBLE_EQ(m.cdf(-5.0), 0.0);
  EXPECT_DOUBLE_EQ(m.cdf(5.0), 1.0);
}

TEST(Quantile, InvertsCdf) {
  for (const auto& m : {Marginal::uniform(-2, 3), Marginal::normal(1, 4),
                        Marginal::empirical({0.1, 0.5, 0.9}, {-1.0, 0.0, 2.0})}) {
    auto [lo, hi] = m.probe_box();
    for (int k = 1; k < 20; ++k) {
      double t = lo + (hi - lo) * k / 20.0;
      EXPECT_NEAR(m.quantile(m.cdf(t)), t, 1e-9) << m.describe() << " t=" << t;
    }
  }
}

TEST(Quantile, NormalTailsAccurate) {
  auto z = Marginal::normal(0, 1);
  for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.7, 0.99, 1 - 1e-9}) EXPECT_NEAR(z.cdf(z.quantile(p)), p, 1e-14 + 1e-12 * p);
}

TEST(Marginal, InvalidParameters) {
  EXPECT_THROW(Marginal::uniform(1, 1), InvalidArgument);
  EXPECT_THROW(Marginal::normal(0, 0), InvalidArgument);
  EXPECT_THROW(Marginal::empirical({0.5, 0.4}, {0.0, 1.0}), InvalidArgument);
  EXPECT_THROW(Marginal::empirical({0.0, 0.5}, {0.0, 1.0}), InvalidArgument);
}

TEST(Marginal, Moments) {
  auto u = Marginal::uniform(-1, 3);
  EXPECT_DOUBLE_EQ(u.mean(), 1.0);
  EXPECT_NEAR(u.variance(), 16.0 / 12.0, 1e-14);
  auto n = Marginal::normal(2, 0.25);
  EXPECT_DOUBLE_EQ(n.mean(), 2.0);
  EXPECT_DOUBLE_EQ(n.variance(), 0.25);
}

TEST(Marginal, RulesAreProbabilityRules) {
  for (const auto& m : {Marginal::uniform(-2, 3), Marginal::normal(1, 4)}) {
    AxisRule r = m.rule(24);
    EXPECT_NEAR(r.expect([](double) { return 1.0; }), 1.0, 1e-13);
    EXPECT_NEAR(r.expect([](double x) { return x; }), m.mean(), 1e-12) << m.describe();
  }
  // kinks in the piecewise-linear quantile limit the empirical rule to low accuracy
  auto e = Marginal::empirical({0.1, 0.5, 0.9}, {-1.0, 0.0, 2.0});
  AxisRule r = e.rule(24);
  EXPECT_NEAR(r.expect([](double) { return 1.0; }), 1.0, 1e-13);
  EXPECT_NEAR(r.expect([](double x) { return x; }), e.mean(), 1e-3);
}

TEST(KernelK, KnownValues) {
  auto u = Marginal::uniform(0, 1);
  EXPECT_NEAR(kernel_k(u, 0.5, 0.3), 0.3, 1e-15);
  EXPECT_NEAR(kernel_k(u, 0.5, 0.7), -0.3, 1e-15);
  EXPECT_NEAR(kernel_k(u, 0.5, 0.5), -0.5, 1e-15);
}

TEST(KernelK, MeanZeroInX) {
  // int k(x,t) p(x) dx = P(t) - P(t) = 0
  auto m = Marginal::normal(0.5, 2.0);
  for (double t : {-1.0, 0.2, 1.7}) {
    // split at the jump in x = t
    AxisRule r = gauss_legendre(200, -10.0, t);
    AxisRule right = gauss_legendre(200, t, 11.0);
    r.nodes.insert(r.nodes.end(), right.nodes.begin(), right.nodes.end());
    r.weights.insert(r.weights.end(), right.weights.begin(), right.weights.end());
    double s = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) s += r.weights[j] * m.pdf(r.nodes[j]) * kernel_k(m, r.nodes[j], t);
    EXPECT_NEAR(s, 0.0, 1e-10);
  }
}

TEST(BridgeG, SymmetricAndBounded) {
  auto m = Marginal::normal(0, 1);
  for (double t : {-1.0, 0.0, 0.5})
    for (double s : {-0.5, 0.3, 2.0}) {
      EXPECT_DOUBLE_EQ(bridge_G(m, t, s), bridge_G(m, s, t));
      EXPECT_GE(bridge_G(m, t, s), 0.0);
      EXPECT_LE(bridge_G(m, t, s), 0.25);
    }
}

TEST(Gamma, UniformMinusOneOne) {
  auto r = gamma_constant(ProductMeasure::homogeneous(Marginal::uniform(-1, 1), 3));
  EXPECT_NEAR(r.value, 1.0 / 3.0, 1e-10);
}

TEST(Gamma, UniformUnitAndScaling) {
  auto r01 = gamma_constant(ProductMeasure({Marginal::uniform(0, 1)}));
  EXPECT_NEAR(r01.value, 1.0 / 12.0, 1e-10);
  // doubling the interval scales gamma by 4
  auto r02 = gamma_constant(ProductMeasure({Marginal::uniform(0, 2)}));
  EXPECT_NEAR(r02.value, 4.0 * r01.value, 1e-10);
}

TEST(Gamma, SingleMarginalEqualsVariance) {
  // int int P(min)(1-P(max)) = Cov-type identity giving Var(X)
  for (const auto& m : {Marginal::normal(0, 1), Marginal::normal(3, 0.5),
                        Marginal::empirical({0.1, 0.4, 0.8, 0.95}, {-1.0, 0.0, 0.5, 3.0})}) {
    auto r = gamma_constant(ProductMeasure({m}));
    EXPECT_NEAR(r.value, m.variance(), 2e-6) << m.describe();
  }
}

TEST(Gamma, NormalWindowMatchesBruteForce) {
  GammaOptions opt;
  opt.window = std::make_pair(-1.0, 1.0);
  auto r = gamma_constant(ProductMeasure({Marginal::normal(0, 1)}), opt);
  const double oracle = brute_gamma({normal_cdf}, -1.0, 1.0, 2000);
  EXPECT_NEAR(r.value, oracle, 1e-6);
  EXPECT_NEAR(r.value, 0.516, 1e-3);
}

TEST(Gamma, HeterogeneousTakesPointwiseMax) {
  ProductMeasure pm({Marginal::uniform(-1, 1), Marginal::uniform(0, 1)});
  auto r = gamma_constant(pm);
  auto c1 = [](double t) { return std::clamp((t + 1.0) / 2.0, 0.0, 1.0); };
  auto c2 = [](double t) { return std::clamp(t, 0.0, 1.0); };
  const double oracle = brute_gamma({c1, c2}, -1.0, 1.0, 2000);
  EXPECT_NEAR(r.value, oracle, 1e-5);
  EXPECT_GE(r.value, 1.0 / 3.0 - 1e-12);
}

TEST(Gamma, QuadratureFailureReportsEstimates) {
  GammaOptions opt;
  opt.panel_order = 1;
  opt.max_refinements = 0;
  opt.tolerance = 1e-15;
  try {
    gamma_constant(ProductMeasure({Marginal::normal(0, 1)}), opt);
    FAIL() << "expected QuadratureError";
  } catch (const QuadratureError& e) {
    EXPECT_TRUE(std::isfinite(e.coarse()));
    EXPECT_TRUE(std::isfinite(e.fine()));
  }
}

TEST(Gamma, PowerBound) { EXPECT_NEAR(gamma_m_bound(1.0 / 3.0, 3), 1.0 / 27.0, 1e-16); }

TEST(EmpiricalCsv, ReadsColumnWithHeader) {
  const std::string path = ::testing::TempDir() + "emp.csv";
  {
    std::ofstream out(path);
    out << "a,b\n1,10\n2,30\n3,20\n4,40\n";
  }
  auto m = empirical_from_csv(path, 1);
  EXPECT_DOUBLE_EQ(m.support().first, 10.0);
  EXPECT_DOUBLE_EQ(m.support().second, 40.0);
  EXPECT_NEAR(m.quantile(0.125), 10.0, 1e-12);
  EXPECT_THROW(empirical_from_csv(path, 5), IoError);
  EXPECT_THROW(empirical_from_csv(path + ".missing", 0), IoError);
  std::remove(path.c_str());
}

TEST(ProductMeasure, DensityAndPrefix) {
  ProductMeasure pm({Marginal::uniform(0, 2), Marginal::uniform(-1, 1), Marginal::normal(0, 1)});
  std::vector<double> x{1.0, 0.0, 0.0};
  EXPECT_NEAR(pm.density(x), 0.5 * 0.5 / std::sqrt(2 * M_PI), 1e-15);
  EXPECT_EQ(pm.prefix(2).dims(), 2u);
  EXPECT_EQ(pm.grid(5).total_points(), 125u);
}
