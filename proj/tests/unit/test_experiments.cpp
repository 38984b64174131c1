#include <gtest/gtest.h>

#include <cmath>

#include "anova/experiments.hpp"
#include "anova/quadrature.hpp"

using namespace anova;

namespace {

ExperimentConfig config(ExperimentName name, std::vector<std::size_t> dims, std::vector<std::size_t> orders,
                        std::size_t samples = 0) {
  ExperimentConfig c;
  c.name = name;
  c.dims = std::move(dims);
  c.orders = std::move(orders);
  c.samples = samples;
  return c;
}

std::vector<std::size_t> range(std::size_t a, std::size_t b) {
  std::vector<std::size_t> v;
  for (std::size_t k = a; k <= b; ++k) v.push_back(k);
  return v;
}

}  // namespace

TEST(Example1, OneDimensionalStdDev) {
  auto rows = run_example1(config(ExperimentName::example1, {1}, {1}));
  ASSERT_EQ(rows.size(), 1u);
  AxisRule r = Marginal::uniform(-1, 1).rule(40);
  const double c = r.expect([](double x) { return std::exp(-x * x); });
  const double s = r.expect([c](double x) { return std::pow(std::exp(-x * x) - c, 2); });
  EXPECT_NEAR(rows[0].rms, std::sqrt(s), 1e-12);
}

TEST(Example1, FullOrderRemainderVanishes) {
  auto rows = run_example1(config(ExperimentName::example1, {1, 2, 3}, {2, 3, 4}));
  for (const auto& r : rows)
    if (r.m - 1 >= r.n) EXPECT_EQ(r.rms, 0.0) << r.n << " " << r.m;
}

TEST(Example1, AdditiveRemainderBelowBound) {
  auto rows = run_example1(config(ExperimentName::example1, range(5, 50), {1}));
  for (const auto& r : rows) {
    EXPECT_LE(r.rms, std::sqrt(4.0 / (3.0 * r.n)));
    EXPECT_LE(r.rms, *r.bound);
  }
}

TEST(Example1, ScaledColumnsFlat) {
  for (std::size_t m = 1; m <= 3; ++m) {
    auto rows = run_example1(config(ExperimentName::example1, range(2 * m, 50), {m}));
    double lo = INFINITY, hi = 0.0;
    for (const auto& r : rows) {
      lo = std::min(lo, r.scaled);
      hi = std::max(hi, r.scaled);
    }
    EXPECT_LE(hi / lo, 2.0) << m;
  }
}

TEST(Example1, MonteCarloColumnConsistent) {
  auto rows = run_example1(config(ExperimentName::example1, {4, 10}, {1, 2}, 20000));
  for (const auto& r : rows) {
    ASSERT_TRUE(r.mc_rms && r.mc_se);
    EXPECT_NEAR(*r.mc_rms, r.rms, 5.0 * *r.mc_se + 1e-12);
  }
  auto again = run_example1(config(ExperimentName::example1, {4, 10}, {1, 2}, 20000));
  for (std::size_t k = 0; k < rows.size(); ++k) EXPECT_EQ(*rows[k].mc_rms, *again[k].mc_rms);
}

TEST(Example2, FourthOrderExactlyZero) {
  auto rows = run_example2(config(ExperimentName::example2, {1, 3, 10, 100}, {4}));
  for (const auto& r : rows) EXPECT_EQ(r.rms, 0.0);
}

TEST(Example2, LeadingTermForLargeN) {
  auto rows = run_example2(config(ExperimentName::example2, {100}, {1}, 100000));
  EXPECT_NEAR(rows[0].rms, std::sqrt(3.0 / 100.0), 0.01 * std::sqrt(0.03));
  ASSERT_TRUE(rows[0].mc_rms);
  EXPECT_NEAR(*rows[0].mc_rms, rows[0].rms, 5.0 * *rows[0].mc_se);
}

TEST(Example2, SingleCoordinate) {
  auto rows = run_example2(config(ExperimentName::example2, {1}, {1, 2}));
  const double s2 = 0.5 * (1.0 - std::exp(-2.0));
  EXPECT_NEAR(rows[0].rms, std::sqrt(s2), 1e-14);
  EXPECT_EQ(rows[1].rms, 0.0);
}

TEST(Example2, Slopes) {
  for (std::size_t m = 1; m <= 3; ++m) {
    auto rows = run_example2(config(ExperimentName::example2, range(10, 100), {m}));
    std::vector<double> x, y;
    for (const auto& r : rows) {
      x.push_back(static_cast<double>(r.n));
      y.push_back(r.rms);
    }
    EXPECT_NEAR(loglog_slope(x, y), -0.5 * m, 0.15);
  }
}

TEST(Config, Validation) {
  EXPECT_THROW(run_example1(config(ExperimentName::example1, {}, {1})), InvalidArgument);
  EXPECT_THROW(run_example1(config(ExperimentName::example1, {3, 2}, {1})), InvalidArgument);
  EXPECT_THROW(run_example1(config(ExperimentName::example1, {3}, {5})), InvalidArgument);
  EXPECT_EQ(parse_experiment_name("concentration_nn"), ExperimentName::concentration_nn);
  EXPECT_THROW(parse_experiment_name("fig9"), InvalidArgument);
}

TEST(Counterexample, ProductResidualIsVariance) {
  auto r = counterexample_product(3);
  EXPECT_NEAR(r.variance, 1.0 / 27.0, 1e-14);
  EXPECT_NEAR(r.anova_mse, 1.0 / 27.0, 1e-14);
  EXPECT_NEAR(r.oracle_mse, 1.0 / 27.0, 1e-10);
  EXPECT_LT(r.max_projection, 1e-14);
}

TEST(Counterexample, ProductFullOrderZero) {
  auto pm = ProductMeasure::homogeneous(Marginal::uniform(-1, 1, 5), 3);
  auto f = builtin_product(3);
  EXPECT_NEAR(residual_mse(project(f, pm, 3), f).mse, 0.0, 1e-15);
}

TEST(Counterexample, BumpsRatio) {
  auto r = counterexample_bumps(2);
  EXPECT_GE(r.ratio, 0.99);
  EXPECT_NEAR(r.anova_mse, r.variance, 1e-12);
  EXPECT_THROW(counterexample_bumps(5), InvalidArgument);
  EXPECT_THROW(counterexample_product(6), InvalidArgument);
}

TEST(Concentration, MinDimension) {
  EXPECT_EQ(concentration_min_dimension(0.5, 1.0, 1.0), 3u);
  EXPECT_EQ(concentration_min_dimension(0.9, 0.5, 1.0), 1u);
  const std::size_t n = concentration_min_dimension(0.2, kSphereC1, kSphereC2);
  EXPECT_EQ(n, 58u);
  EXPECT_LT(kSphereC1 * std::exp(-kSphereC2 * 0.04 * n), 0.2);
  EXPECT_GE(kSphereC1 * std::exp(-kSphereC2 * 0.04 * (n - 1)), 0.2);
  EXPECT_EQ(quoted_min_dimension(0.2), 41.0);
  EXPECT_THROW(concentration_min_dimension(1.5, 1, 1), InvalidArgument);
}

TEST(Concentration, NearestNeighborSpreadShrinks) {
  auto c = config(ExperimentName::concentration_nn, {1, 2, 100}, {}, 10000);
  auto stats = concentration_nn_demo(c);
  ASSERT_EQ(stats.size(), 3u);
  EXPECT_LT(stats[2].relative_spread, stats[1].relative_spread);
  EXPECT_GT(stats[0].relative_spread, stats[1].relative_spread);
  c.samples = 50;
  EXPECT_THROW(concentration_nn_demo(c), InvalidArgument);
}
