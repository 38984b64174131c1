// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "../common/random_functions.hpp"
#include "anova/anova.hpp"

using namespace anova;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const std::string& title, double time_limit, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (time_limit > 0.0 && secs >= time_limit) {
    o.pass = false;
    o.detail += " [over time limit " + format_number(time_limit, 3) + " s]";
  }
  if (!o.pass) ++failures;
  std::printf("criterion %2d %s  %-34s %7.2fs  %s\n", id, o.pass ? "PASS" : "FAIL", title.c_str(), secs,
              o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v, int digits = 6) { return format_number(v, digits); }

std::vector<std::size_t> range(std::size_t a, std::size_t b) {
  std::vector<std::size_t> v;
  for (std::size_t k = a; k <= b; ++k) v.push_back(k);
  return v;
}

double slope_of(const std::vector<ScalingRow>& rows, std::size_t m, std::size_t lo, std::size_t hi) {
  std::vector<double> x, y;
  for (const auto& r : rows)
    if (r.m == m && r.n >= lo && r.n <= hi) {
      x.push_back(static_cast<double>(r.n));
      y.push_back(r.rms);
    }
  return loglog_slope(x, y);
}

ProductMeasure suite_measure() { return ProductMeasure::homogeneous(Marginal::uniform(-1, 1, 9), 3); }

}  // namespace

int main() {
  run(1, "gamma constants", 1.0, [] {
    const double u = gamma_constant(ProductMeasure::homogeneous(Marginal::uniform(-1, 1), 3)).value;
    const double z = gamma_constant(ProductMeasure::homogeneous(Marginal::normal(0, 1), 3)).value;
    GammaOptions w;
    w.window = std::make_pair(-1.0, 1.0);
    const double zw = gamma_constant(ProductMeasure({Marginal::normal(0, 1)}), w).value;
    const bool ok_u = std::abs(u - 1.0 / 3.0) < 1e-6;
    const bool ok_z = std::abs(z - 0.516) < 1e-3;
    return Outcome{ok_u && ok_z, "uniform(-1,1)=" + fmt(u, 10) + (ok_u ? " ok" : " off") + ", normal(0,1)=" +
                                     fmt(z, 10) + " vs 0.516" + (ok_z ? " ok" : " off") +
                                     " (window [-1,1]^2 gives " + fmt(zw, 7) + ")"};
  });

  run(2, "optimality oracle", 30.0, [] {
    const auto pm = suite_measure();
    double worst_mse = 0.0, worst_full = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto f = fixtures::random_smooth_function(3, seed);
      for (std::size_t m = 0; m <= 2; ++m) worst_mse = std::max(worst_mse, std::abs(verify_optimality(f, pm, m).mse_gap));
      const auto dec = project(f, pm, 3);
      const auto values = evaluate_on_grid(f, dec.grid);
      const auto fit = projection_on_grid(dec);
      for (std::size_t p = 0; p < values.size(); ++p) worst_full = std::max(worst_full, std::abs(values[p] - fit[p]));
    }
    return Outcome{worst_mse < 1e-8 && worst_full < 1e-9,
                   "max |mse gap|=" + fmt(worst_mse, 3) + ", max |P3 f - f|=" + fmt(worst_full, 3)};
  });

  run(3, "orthogonality and Parseval", 0.0, [] {
    const auto pm = suite_measure();
    double worst_inner = 0.0, worst_parseval = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto f = fixtures::random_smooth_function(3, seed);
      const auto dec = project(f, pm, 3);
      const auto w = grid_weights(dec.grid);
      std::vector<std::vector<double>> tv;
      std::vector<std::size_t> shape(3, 9);
      for (const auto& [u, t] : dec.terms) {
        std::vector<double> vals;
        std::vector<std::size_t> idx(3, 0);
        std::vector<double> x(3);
        do {
          for (std::size_t i = 0; i < 3; ++i) x[i] = dec.grid.axis(i).nodes[idx[i]];
          vals.push_back(dec.term_value(u, x));
        } while (next_multi_index(idx, shape));
        tv.push_back(std::move(vals));
      }
      for (std::size_t a = 0; a < tv.size(); ++a)
        for (std::size_t b = a + 1; b < tv.size(); ++b) {
          double s = 0.0;
          for (std::size_t p = 0; p < w.size(); ++p) s += w[p] * tv[a][p] * tv[b][p];
          worst_inner = std::max(worst_inner, std::abs(s));
        }
      worst_parseval = std::max(worst_parseval, std::abs(*dec.function_variance - dec.total_term_variance()));
    }
    return Outcome{worst_inner < 1e-8 && worst_parseval < 1e-8,
                   "max |<f_u,f_v>|=" + fmt(worst_inner, 3) + ", max Parseval gap=" + fmt(worst_parseval, 3)};
  });

  run(4, "smoothness bound dominance", 0.0, [] {
    ExperimentConfig cfg;
    cfg.dims = range(1, 50);
    cfg.orders = {1, 2, 3, 4};
    cfg.samples = 0;
    const auto rows = run_example1(cfg);
    std::size_t violations = 0, nonpositive = 0;
    double worst_ratio = 0.0;
    for (const auto& r : rows) {
      const double measured = r.rms * r.rms;
      const double analytic = theorem3_bound(1.0 / 3.0, r.m, example1_seminorm_sq(r.n, r.m));
      const double bound = example1_bound(r.n, r.m);
      if (measured > bound || measured > analytic * (1 + 1e-12)) ++violations;
      if (r.m <= r.n && !(measured > 0.0)) ++nonpositive;
      worst_ratio = std::max(worst_ratio, measured / bound);
    }
    return Outcome{violations == 0 && nonpositive == 0,
                   std::to_string(rows.size()) + " cells, violations=" + std::to_string(violations) +
                       ", nonpositive=" + std::to_string(nonpositive) + ", max measured/bound=" + fmt(worst_ratio, 4)};
  });

  run(5, "example 1 scaling", 10.0, [] {
    ExperimentConfig cfg;
    cfg.dims = range(2, 50);
    cfg.samples = 0;
    const auto rows = run_example1(cfg);
    bool ok = true;
    std::string detail;
    for (std::size_t m = 1; m <= 4; ++m) {
      double lo = INFINITY, hi = 0.0;
      for (const auto& r : rows)
        if (r.m == m && r.n >= 2 * m) {
          lo = std::min(lo, r.scaled);
          hi = std::max(hi, r.scaled);
        }
      const double s = slope_of(rows, m, 10, 50);
      const bool flat = hi / lo <= 2.0;
      const bool slope = std::abs(s + 0.5 * m) <= 0.15;
      ok = ok && flat && slope;
      detail += "m=" + std::to_string(m) + ": max/min=" + fmt(hi / lo, 4) + (flat ? "" : "!") + " slope=" + fmt(s, 4) +
                (slope ? "" : "!") + "; ";
    }
    return Outcome{ok, detail};
  });

  run(6, "example 2 scaling", 0.0, [] {
    ExperimentConfig cfg;
    cfg.name = ExperimentName::example2;
    cfg.dims = range(10, 100);
    cfg.samples = 0;
    const auto rows = run_example2(cfg);
    bool ok = true;
    double max4 = 0.0;
    for (const auto& r : rows)
      if (r.m == 4) max4 = std::max(max4, r.rms);
    ok = max4 == 0.0;
    std::string detail = "max rms(m=4)=" + fmt(max4, 3) + "; ";
    for (std::size_t m = 1; m <= 3; ++m) {
      const double s = slope_of(rows, m, 10, 100);
      const bool slope = std::abs(s + 0.5 * m) <= 0.15;
      ok = ok && slope;
      detail += "m=" + std::to_string(m) + " slope=" + fmt(s, 4) + (slope ? "" : "!") + "; ";
    }
    return Outcome{ok, detail};
  });

  run(7, "counterexamples", 0.0, [] {
    const auto prod = counterexample_product(3);
    // the oracle fit itself must be the zero function
    const auto pm = ProductMeasure::homogeneous(Marginal::uniform(-1, 1, 9), 3);
    const DiscreteModel model(pm.grid());
    const auto fit = ls_project(evaluate_on_grid(builtin_product(3), model.grid()), model, 2);
    double max_fit = 0.0;
    for (double v : fit.fit) max_fit = std::max(max_fit, std::abs(v));
    const auto bumps = counterexample_bumps(2);
    const bool ok_p = std::abs(prod.oracle_mse - 1.0 / 27.0) < 1e-8 && std::abs(prod.anova_mse - 1.0 / 27.0) < 1e-8 &&
                      max_fit < 1e-8;
    const bool ok_b = bumps.nodes_per_axis == 64 && bumps.ratio >= 0.99;
    return Outcome{ok_p && ok_b, "product residual=" + fmt(prod.oracle_mse, 10) + " (1/27=" + fmt(1.0 / 27.0, 10) +
                                     "), max|fit|=" + fmt(max_fit, 3) + "; bumps oracle mse/var=" + fmt(bumps.ratio, 8)};
  });

  run(8, "quasi-independence sandwich", 10.0, [] {
    const auto dep = kappa_sandwich(truncated_gaussian(2, 0.5), builtin_product(2), 1, 64, 1e-8);
    const auto ind = kappa_sandwich(independent_density(ProductMeasure::homogeneous(Marginal::uniform(-2, 2), 2)),
                                    builtin_product(2), 1, 64, 1e-8);
    const bool tight = std::abs(ind.kappa - 1.0) < 1e-8 && std::abs(ind.mid - ind.lower) < 1e-8 &&
                       std::abs(ind.upper - ind.lower) < 1e-8;
    return Outcome{dep.holds && tight,
                   "rho=0.5: lower=" + fmt(dep.lower) + " mid=" + fmt(dep.mid) + " kappa*lower=" + fmt(dep.upper) +
                       " kappa=" + fmt(dep.kappa) + "; independent: lower=" + fmt(ind.lower) + " mid=" + fmt(ind.mid) +
                       " kappa=" + fmt(ind.kappa)};
  });

  run(9, "truncation split", 0.0, [] {
    const auto pm = ProductMeasure::homogeneous(Marginal::uniform(-1, 1, 9), 4);
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto f = fixtures::random_smooth_function(4, seed);
      for (std::size_t m = 0; m <= 2; ++m) {
        const auto t = truncate(f, pm, 2, m);
        worst = std::max(worst, std::abs(*t.total_mse - (*t.anova_residual + t.tail_mse)));
      }
    }
    return Outcome{worst < 1e-8, "max |total - (anova + tail)|=" + fmt(worst, 3)};
  });

  run(10, "nearest-neighbor concentration", 30.0, [] {
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      ExperimentConfig cfg;
      cfg.name = ExperimentName::concentration_nn;
      cfg.dims = {2, 100};
      cfg.samples = 10000;
      cfg.seed = seed;
      const auto s = concentration_nn_demo(cfg);
      if (s[1].relative_spread < s[0].relative_spread) ++wins;
      if (seed == 0) detail = "seed 0: n=2 " + fmt(s[0].relative_spread, 4) + ", n=100 " + fmt(s[1].relative_spread, 4);
    }
    return Outcome{wins == 10, std::to_string(wins) + "/10 seeds; " + detail};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
