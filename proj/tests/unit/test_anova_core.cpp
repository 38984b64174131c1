#include <gtest/gtest.h>

#include <cmath>

#include "../common/random_functions.hpp"
#include "anova/anova_core.hpp"
#include "anova/builtins.hpp"

using namespace anova;

namespace {

ProductMeasure unif(double a, double b, std::size_t n, std::size_t order = 16) {
  return ProductMeasure::homogeneous(Marginal::uniform(a, b, order), n);
}

TargetFunction lambda(std::size_t n, PointFunction fn) {
  TargetFunction f;
  f.arity = n;
  f.evaluate = std::move(fn);
  return f;
}

// Weighted inner product of two grid functions.
double inner(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) s += w[p] * a[p] * b[p];
  return s;
}

// f_u evaluated at every node of the full grid.
std::vector<double> term_on_grid(const AnovaDecomposition& dec, const SubsetIndex& u) {
  std::vector<std::size_t> shape;
  for (const auto& a : dec.grid.axes()) shape.push_back(a.size());
  std::vector<std::size_t> idx(shape.size(), 0);
  std::vector<double> out;
  std::vector<double> x(shape.size());
  do {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = dec.grid.axis(i).nodes[idx[i]];
    out.push_back(dec.term_value(u, x));
  } while (next_multi_index(idx, shape));
  return out;
}

}  // namespace

TEST(CondExpectation, KnownValues) {
  auto f = builtin_product(2);
  EXPECT_NEAR(cond_expectation(f, unif(-1, 1, 2), SubsetIndex{0}, std::vector<double>{0.7}).value, 0.0, 1e-15);
  EXPECT_NEAR(cond_expectation(f, unif(0, 1, 2), SubsetIndex{0}, std::vector<double>{0.5}).value, 0.25, 1e-14);
}

TEST(CondExpectation, EmptySubsetMatchesSquaredOneDimensionalRule) {
  auto f = lambda(2, [](std::span<const double> x) { return std::exp(-(x[0] * x[0] + x[1] * x[1]) / 2.0); });
  AxisRule r = Marginal::uniform(-1, 1).rule(30);
  const double one_d = r.expect([](double t) { return std::exp(-t * t / 2.0); });
  EXPECT_NEAR(cond_expectation(f, unif(-1, 1, 2, 30), SubsetIndex{}, std::vector<double>{}).value, one_d * one_d,
              1e-10);
}

TEST(CondExpectation, MonteCarloWhenComplementTooLarge) {
  auto f = builtin_mean(8);
  EngineOptions opt;
  opt.grid_limit = 10;
  opt.mc_samples = 4096;
  auto e = cond_expectation(f, unif(-1, 1, 8), SubsetIndex{2}, std::vector<double>{0.8}, opt);
  EXPECT_EQ(e.backend, Backend::monte_carlo);
  EXPECT_GT(e.std_error, 0.0);
  EXPECT_NEAR(e.value, 0.1, 5.0 * e.std_error);
  auto again = cond_expectation(f, unif(-1, 1, 8), SubsetIndex{2}, std::vector<double>{0.8}, opt);
  EXPECT_EQ(e.value, again.value);
}

TEST(DOperator, KnownValues) {
  auto pm = unif(-1, 1, 3);
  auto c = lambda(3, [](std::span<const double>) { return 4.2; });
  auto x1 = lambda(3, [](std::span<const double> x) { return x[0]; });
  std::vector<double> pt{0.3, -0.6, 0.9};
  EXPECT_NEAR(d_operator(c, pm, 1)(pt), 0.0, 1e-14);
  EXPECT_NEAR(d_operator(x1, pm, 0)(pt), 0.3, 1e-14);
  EXPECT_NEAR(d_operator(x1, pm, 1)(pt), 0.0, 1e-14);
}

TEST(DOperator, PropagatesMixedDerivative) {
  auto pm = unif(-1, 1, 2);
  auto f = builtin_gauss(2);
  auto d = d_operator(f, pm, 0);
  ASSERT_TRUE(static_cast<bool>(d.mixed_derivative));
  std::vector<double> pt{0.4, -0.2};
  // derivative in x_1 of D_1 f equals that of f
  EXPECT_NEAR(d.mixed_derivative(pt, SubsetIndex{0}), f.mixed_derivative(pt, SubsetIndex{0}), 1e-14);
}

TEST(AnovaTerm, EmptySubsetIsMean) {
  auto f = builtin_gauss(2);
  auto pm = unif(-1, 1, 2, 20);
  auto t = anova_term(f, pm, SubsetIndex{});
  ASSERT_EQ(t.values.size(), 1u);
  AxisRule r = Marginal::uniform(-1, 1).rule(20);
  const double c = r.expect([](double x) { return std::exp(-x * x / 2.0); });
  EXPECT_NEAR(t.values[0], c * c, 1e-13);
}

TEST(AnovaTerm, FullProductTermIsItself) {
  auto pm = unif(-1, 1, 2, 6);
  auto t = anova_term(builtin_product(2), pm, SubsetIndex{0, 1});
  const auto& nodes = pm[0].rule().nodes;
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = 0; b < 6; ++b) EXPECT_NEAR(t.values[a * 6 + b], nodes[a] * nodes[b], 1e-14);
}

TEST(AnovaTerm, GaussPairMatchesClosedForm) {
  const std::size_t n = 3;
  auto pm = unif(-1, 1, n, 12);
  auto t = anova_term(builtin_gauss(n), pm, SubsetIndex{0, 1});
  auto g = [](double x) { return std::exp(-x * x / 3.0); };
  const double c = Marginal::uniform(-1, 1).rule(12).expect(g);
  const auto& nodes = pm[0].rule().nodes;
  for (std::size_t a = 0; a < 12; ++a)
    for (std::size_t b = 0; b < 12; ++b)
      EXPECT_NEAR(t.values[a * 12 + b], (g(nodes[a]) - c) * (g(nodes[b]) - c) * c, 1e-12);
}

TEST(Project, OrderZeroIsMean) {
  auto f = builtin_gauss(3);
  auto dec = project(f, unif(-1, 1, 3), 0);
  EXPECT_TRUE(dec.terms.empty());
  EXPECT_NEAR(dec.mean, cond_expectation(f, unif(-1, 1, 3), SubsetIndex{}, std::vector<double>{}).value, 1e-14);
  EXPECT_EQ(dec.term_variance.size(), 1u);
  EXPECT_EQ(dec.term_variance.at(SubsetIndex{}), 0.0);
}

TEST(Project, FullOrderReproducesFunction) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto f = fixtures::random_smooth_function(3, seed);
    auto dec = project(f, unif(-1, 1, 3, 7), 3);
    auto values = evaluate_on_grid(f, dec.grid);
    auto fit = projection_on_grid(dec);
    for (std::size_t p = 0; p < values.size(); ++p) EXPECT_NEAR(fit[p], values[p], 1e-9);
    EXPECT_NEAR(residual_mse(dec, f).mse, 0.0, 1e-12);
  }
}

TEST(Project, ProductBelowFullOrderVanishes) {
  for (std::size_t n = 2; n <= 4; ++n) {
    auto f = builtin_product(n);
    auto dec = project(f, unif(-1, 1, n, 5), n - 1);
    for (const auto& [u, v] : dec.term_variance) EXPECT_NEAR(v, 0.0, 1e-15) << u.to_string();
    auto r = residual_mse(dec, f);
    EXPECT_NEAR(r.mse, std::pow(3.0, -static_cast<double>(n)), 1e-14);
  }
}

TEST(Project, ConstantHasNoResidual) {
  auto f = lambda(3, [](std::span<const double>) { return -2.5; });
  for (std::size_t m = 0; m <= 3; ++m) {
    auto dec = project(f, unif(-1, 1, 3, 4), m);
    EXPECT_NEAR(dec.mean, -2.5, 1e-14);
    EXPECT_NEAR(residual_mse(dec, f).mse, 0.0, 1e-14);
  }
}

TEST(Project, SubsetKeysBoundedByOrder) {
  auto dec = project(fixtures::random_smooth_function(4, 9), unif(-1, 1, 4, 5), 2);
  for (const auto& [u, t] : dec.terms) EXPECT_LE(u.size(), 2u);
  EXPECT_EQ(dec.terms.size(), 4u + 6u);
}

TEST(Project, TermsIntegrateToZeroInEachOwnCoordinate) {
  auto f = fixtures::random_smooth_function(3, 4);
  auto dec = project(f, ProductMeasure({Marginal::uniform(-1, 2, 6), Marginal::normal(0, 1, 7),
                                        Marginal::empirical({0.1, 0.5, 0.9}, {0.0, 1.0, 3.0}, 5)}),
                     3);
  for (const auto& [u, t] : dec.terms) {
    const auto& gt = std::get<GridTerm>(t);
    for (std::size_t k = 0; k < u.size(); ++k) {
      // sum over axis k with its weights; every remaining slice must vanish
      const auto& w = dec.grid.axis(u[k]).weights;
      std::size_t inner = 1;
      for (std::size_t j = k + 1; j < gt.shape.size(); ++j) inner *= gt.shape[j];
      const std::size_t outer = gt.values.size() / (inner * gt.shape[k]);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          double s = 0.0;
          for (std::size_t a = 0; a < gt.shape[k]; ++a) s += w[a] * gt.values[(o * gt.shape[k] + a) * inner + in];
          EXPECT_NEAR(s, 0.0, 1e-8) << u.to_string() << " axis " << k;
        }
    }
  }
}

TEST(Project, OrthogonalityAndParseval) {
  auto pm = ProductMeasure({Marginal::uniform(-1, 1, 6), Marginal::normal(0.5, 2.0, 6), Marginal::uniform(0, 3, 6)});
  for (std::uint64_t seed = 10; seed < 14; ++seed) {
    auto f = fixtures::random_smooth_function(3, seed);
    auto dec = project(f, pm, 3);
    auto w = grid_weights(dec.grid);
    std::vector<std::pair<SubsetIndex, std::vector<double>>> vals;
    for (const auto& [u, t] : dec.terms) vals.emplace_back(u, term_on_grid(dec, u));
    for (std::size_t a = 0; a < vals.size(); ++a)
      for (std::size_t b = a + 1; b < vals.size(); ++b)
        EXPECT_LT(std::abs(inner(vals[a].second, vals[b].second, w)), 1e-8);
    ASSERT_TRUE(dec.function_variance.has_value());
    EXPECT_NEAR(*dec.function_variance, dec.total_term_variance(), 1e-8);
    for (const auto& [u, v] : dec.term_variance) EXPECT_GE(v, 0.0);
  }
}

TEST(Project, Idempotent) {
  auto pm = unif(-1, 1, 3, 6);
  auto f = fixtures::random_smooth_function(3, 21);
  for (std::size_t m = 0; m <= 3; ++m) {
    auto dec = project(f, pm, m);
    auto fit = projection_on_grid(dec);
    auto again = project_grid_values(fit, dec.grid, m);
    auto fit2 = projection_on_grid(again);
    for (std::size_t p = 0; p < fit.size(); ++p) EXPECT_NEAR(fit[p], fit2[p], 1e-9);
  }
}

TEST(Project, TelescopingSum) {
  // f = E f + sum_i D_i E(f | x_1..x_i)
  const std::size_t n = 3;
  auto pm = unif(-1, 1, n, 5);
  auto f = fixtures::random_smooth_function(n, 33);
  const double mean = cond_expectation(f, pm, SubsetIndex{}, std::vector<double>{}).value;
  std::vector<TargetFunction> parts;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> head(i + 1);
    for (std::size_t k = 0; k <= i; ++k) head[k] = k;
    parts.push_back(d_operator(conditional_function(f, pm, SubsetIndex(head)), pm, i));
  }
  auto grid = pm.grid();
  std::vector<std::size_t> shape(n, 5), idx(n, 0);
  std::vector<double> x(n);
  do {
    for (std::size_t i = 0; i < n; ++i) x[i] = grid.axis(i).nodes[idx[i]];
    double s = mean;
    for (const auto& p : parts) s += p(x);
    EXPECT_NEAR(s, f(x), 1e-9);
  } while (next_multi_index(idx, shape));
}

TEST(Project, InterpolatesOffNodes) {
  // f = x1^2 x2 + x3 gives P_1 f = x2/3 + x3 under uniform(-1,1)^3
  auto f = lambda(3, [](std::span<const double> x) { return x[0] * x[0] * x[1] + x[2]; });
  auto dec = project(f, unif(-1, 1, 3, 6), 1);
  for (auto pt : {std::vector<double>{0.13, -0.71, 0.42}, std::vector<double>{-0.9, 0.05, -0.33}})
    EXPECT_NEAR(dec.evaluate(pt), pt[1] / 3.0 + pt[2], 1e-12);
}

TEST(Project, MonteCarloAgreesWithGrid) {
  const std::size_t n = 3;
  auto pm = unif(-1, 1, n, 8);
  auto f = fixtures::random_smooth_function(n, 5);
  auto exact = project(f, pm, 1);
  EngineOptions opt;
  opt.grid_limit = 100;
  opt.mc_samples = 1 << 12;
  opt.seed = 17;
  auto mc = project(f, pm, 1, opt);
  EXPECT_EQ(mc.backend, Backend::monte_carlo);
  EXPECT_NEAR(mc.mean, exact.mean, 0.05);
  for (const auto& [u, v] : exact.term_variance) EXPECT_NEAR(mc.term_variance.at(u), v, 0.05 + 0.1 * v);
  auto mc2 = project(f, pm, 1, opt);
  for (const auto& [u, v] : mc.term_variance) EXPECT_EQ(mc2.term_variance.at(u), v);
  opt.seed = 18;
  auto mc3 = project(f, pm, 1, opt);
  EXPECT_NE(mc3.mean, mc.mean);
  auto r = residual_mse(mc, f, opt);
  EXPECT_GT(r.std_error, 0.0);
  EXPECT_NEAR(r.mse, residual_mse(exact, f).mse, 5.0 * r.std_error + 0.02);
}

TEST(Project, Errors) {
  auto f = builtin_gauss(3);
  EXPECT_THROW(project(f, unif(-1, 1, 2), 1), InvalidArgument);
  EXPECT_THROW(project(f, unif(-1, 1, 3), 4), InvalidArgument);
  EngineOptions opt;
  opt.term_cap = 3;
  EXPECT_THROW(project(f, unif(-1, 1, 3), 1, opt), CapacityError);
}

TEST(Subsets, CanonicalOrderAndCount) {
  auto s = enumerate_subsets(4, 2);
  ASSERT_EQ(s.size(), 11u);
  EXPECT_EQ(s.size(), count_subsets(4, 2));
  EXPECT_TRUE(s[0].empty());
  EXPECT_EQ(s[1].to_string(), "{1}");
  EXPECT_EQ(s[5].to_string(), "{1,2}");
  EXPECT_EQ(s.back().to_string(), "{3,4}");
  for (std::size_t k = 1; k < s.size(); ++k) EXPECT_TRUE(s[k - 1] < s[k]);
  EXPECT_THROW(SubsetIndex({2, 1}), InvalidArgument);
}

TEST(TargetFunction, ProductFormAgreesWithEvaluate) {
  auto f = builtin_gauss(5);
  EXPECT_LT(f.product_form_discrepancy(unif(-1, 1, 5), 1000, 3), 1e-10);
}
