#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "anova/anova_core.hpp"
#include "anova/error.hpp"
#include "anova/marginals.hpp"
#include "anova/parallel.hpp"
#include "anova/rng.hpp"
#include "anova/target.hpp"

namespace anova {

enum class DerivativeMethod { analytic, finite_difference };

inline const char* to_string(DerivativeMethod m) {
  return m == DerivativeMethod::analytic ? "analytic" : "finite_difference";
}

/// Probed estimate of |f|_m^2 = sup_x sum_{|u|=m} (d^m f / dx_u)^2.
struct SmoothnessReport {
  std::size_t order = 0;
  double seminorm_sq = 0.0;
  std::size_t sample_points_used = 0;
  DerivativeMethod method = DerivativeMethod::analytic;
  /// Always true: a maximum over probes never exceeds the true supremum.
  bool lower_bound = true;
  std::vector<double> argmax;
};

inline constexpr std::size_t kMaxFiniteDifferenceOrder = 4;

/// Mixed partial d^{|u|} f / dx_u. Uses the analytic evaluator when present,
/// otherwise a tensorized central difference with 2^{|u|} evaluations and
/// step h_i = eps^{1/(|u|+2)} * scale_i (cbrt(eps) for first derivatives).
inline double mixed_derivative(const TargetFunction& f, std::span<const double> x, const SubsetIndex& u,
                               std::span<const double> scale = {}) {
  if (x.size() != f.arity) throw InvalidArgument("mixed_derivative: point has wrong dimension");
  u.check_within(f.arity);
  if (f.mixed_derivative) return f.mixed_derivative(x, u);
  if (u.size() > kMaxFiniteDifferenceOrder)
    throw CapacityError("mixed_derivative: order " + std::to_string(u.size()) +
                          " is unsupported by finite differences without an analytic evaluator");
  if (u.empty()) return f(x);
  const double base = std::pow(std::numeric_limits<double>::epsilon(), 1.0 / static_cast<double>(u.size() + 2));
  std::vector<double> h(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    double s = scale.empty() ? 1.0 : scale[u[k]];
    double hk = base * std::max(s, 1e-300);
    // exact representable step
    volatile double tmp = x[u[k]] + hk;
    h[k] = tmp - x[u[k]];
  }
  std::vector<double> y(x.begin(), x.end());
  double acc = 0.0;
  const std::uint64_t corners = std::uint64_t{1} << u.size();
  for (std::uint64_t mask = 0; mask < corners; ++mask) {
    double sign = 1.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      bool plus = mask >> k & 1u;
      y[u[k]] = x[u[k]] + (plus ? h[k] : -h[k]);
      if (!plus) sign = -sign;
    }
    acc += sign * f(y);
  }
  double denom = 1.0;
  for (double hk : h) denom *= 2.0 * hk;
  return acc / denom;
}

/// Finite-difference scale taken from the measure: the marginal standard deviations.
inline std::vector<double> derivative_scales(const ProductMeasure& pm) {
  std::vector<double> s;
  for (const auto& m : pm.marginals()) s.push_back(m.stddev());
  return s;
}

struct SeminormOptions {
  std::size_t subset_cap = 200'000;
  /// All 2^n box corners are probed up to this dimension; beyond it a random subset.
  std::size_t full_corner_dims = 12;
  std::size_t random_corners = 256;
  unsigned threads = 0;
};

/// Approximates |f|_m^2 by the maximum over `probes` draws from pm plus the
/// centre and corners of the probe box. The result is a lower bound of the
/// true supremum.
inline SmoothnessReport seminorm(const TargetFunction& f, const ProductMeasure& pm, std::size_t m, std::size_t probes,
                                 std::uint64_t seed, const SeminormOptions& opt = {}) {
  const std::size_t n = pm.dims();
  if (f.arity != n) throw InvalidArgument("seminorm: arity does not match measure");
  if (m > n) throw InvalidArgument("seminorm: order exceeds dimension");
  if (!f.mixed_derivative && m > kMaxFiniteDifferenceOrder)
    throw InvalidArgument("seminorm: order " + std::to_string(m) + " needs an analytic mixed-derivative evaluator");
  if (count_subsets(n, m) - (m ? count_subsets(n, m - 1) : 0) > opt.subset_cap)
    throw CapacityError("seminorm: too many order-" + std::to_string(m) + " subsets");
  std::vector<SubsetIndex> subsets;
  for (auto& u : enumerate_subsets(n, m))
    if (u.size() == m) subsets.push_back(std::move(u));

  std::vector<std::vector<double>> points;
  std::vector<std::pair<double, double>> box;
  for (const auto& mg : pm.marginals()) box.push_back(mg.probe_box());
  {
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = 0.5 * (box[i].first + box[i].second);
    points.push_back(std::move(c));
  }
  if (n <= opt.full_corner_dims) {
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
      std::vector<double> c(n);
      for (std::size_t i = 0; i < n; ++i) c[i] = (mask >> i & 1u) ? box[i].second : box[i].first;
      points.push_back(std::move(c));
    }
  } else {
    KeyedStream s(hash_keys(seed, {0xC0C0}));
    for (std::size_t r = 0; r < opt.random_corners; ++r) {
      std::vector<double> c(n);
      for (std::size_t i = 0; i < n; ++i) c[i] = (s.next_u64() >> 63) ? box[i].second : box[i].first;
      points.push_back(std::move(c));
    }
  }
  for (std::size_t r = 0; r < probes; ++r) {
    KeyedStream s(hash_keys(seed, {0x9806e, r}));
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = pm[i].sample(s);
    points.push_back(std::move(c));
  }

  const auto scales = derivative_scales(pm);
  std::vector<double> sums(points.size(), 0.0);
  parallel_for(points.size(), opt.threads, [&](std::size_t p) {
    double s = 0.0;
    for (const auto& u : subsets) {
      double d = mixed_derivative(f, points[p], u, scales);
      s += d * d;
    }
    sums[p] = s;
  });
  SmoothnessReport rep;
  rep.order = m;
  rep.sample_points_used = points.size();
  rep.method = f.mixed_derivative ? DerivativeMethod::analytic : DerivativeMethod::finite_difference;
  std::size_t best = 0;
  for (std::size_t p = 1; p < sums.size(); ++p)
    if (sums[p] > sums[best]) best = p;
  rep.seminorm_sq = sums[best];
  rep.argmax = points[best];
  return rep;
}

/// gamma^m |f|_m^2, which bounds E((f - P_{m-1} f)^2).
inline double theorem3_bound(double gamma, std::size_t m, double seminorm_sq) {
  if (!(gamma >= 0.0) || !(seminorm_sq >= 0.0)) throw InvalidArgument("theorem3_bound: negative input");
  return std::pow(gamma, static_cast<double>(m)) * seminorm_sq;
}

/// 4^m / (3^m m! n^m): the bound for exp(-|x|^2/n) on [-1,1]^n with L_m^2 = 4^m/m!.
inline double example1_bound(std::size_t n, std::size_t m) {
  if (n == 0) throw InvalidArgument("example1_bound: n must be positive");
  double r = 1.0;
  for (std::size_t k = 1; k <= m; ++k) r *= 4.0 / (3.0 * static_cast<double>(k) * static_cast<double>(n));
  return r;
}

/// Exact |f|_m^2 for f = exp(-|x|^2/n) on [-1,1]^n. With y_i = x_i^2 the sum
/// is (2/n)^{2m} e_m(y) exp(-2 sum y / n), maximized at y_i = min(m/2, 1).
inline double example1_seminorm_sq(std::size_t n, std::size_t m) {
  if (n == 0) throw InvalidArgument("example1_seminorm_sq: n must be positive");
  if (m > n) return 0.0;
  double binom = 1.0;
  for (std::size_t k = 0; k < m; ++k) binom = binom * static_cast<double>(n - k) / static_cast<double>(k + 1);
  const double y = std::min(0.5 * static_cast<double>(m), 1.0);
  const double ym = m == 0 ? 1.0 : std::pow(y, static_cast<double>(m));
  return std::pow(2.0 / static_cast<double>(n), 2.0 * static_cast<double>(m)) * binom * ym * std::exp(-2.0 * y);
}

struct TruncationResult {
  /// x_1..x_n -> E(f | x_1..x_n).
  TargetFunction projected;
  /// E((T_n f)^2).
  double tail_mse = 0.0;
  /// E((R_{m,n} f)^2) when an order was supplied.
  std::optional<double> anova_residual;
  /// E((f - P_m E(f|x_1..x_n))^2) when an order was supplied.
  std::optional<double> total_mse;
};

/// Splits the error of an order-m model in the first n of N variables into
/// the truncation part T_n f = f - E(f | x_1..x_n) and the ANOVA remainder of
/// E(f | x_1..x_n). The two parts are orthogonal; the split is verified on the grid.
inline TruncationResult truncate(const TargetFunction& f, const ProductMeasure& pm, std::size_t n,
                                 std::optional<std::size_t> m = std::nullopt, const EngineOptions& opt = {}) {
  const std::size_t N = pm.dims();
  if (f.arity != N) throw InvalidArgument("truncate: arity does not match measure");
  if (n == 0 || n > N) throw InvalidArgument("truncate: cutoff must satisfy 1 <= n <= N");
  if (m && *m > n) throw InvalidArgument("truncate: order exceeds cutoff");
  std::vector<std::size_t> head(n);
  for (std::size_t i = 0; i < n; ++i) head[i] = i;
  const SubsetIndex u(head);

  TruncationResult out;
  out.projected.arity = n;
  if (n == N) {
    out.projected.evaluate = f.evaluate;
    out.projected.mixed_derivative = f.mixed_derivative;
    out.projected.product_form = f.product_form;
  } else {
    out.projected.evaluate = [f, pm, u, opt](std::span<const double> x) {
      return cond_expectation(f, pm, u, x, opt).value;
    };
    if (f.product_form) {
      // E over the tail of a product is a constant times the head factors
      double tail = 1.0;
      for (std::size_t i = n; i < N; ++i) tail *= pm[i].rule(opt.quadrature_order).expect((*f.product_form)[i]);
      std::vector<Factor> head_factors(f.product_form->begin(), f.product_form->begin() + static_cast<long>(n));
      head_factors[0] = [g = head_factors[0], tail](double t) { return tail * g(t); };
      out.projected.product_form = std::move(head_factors);
    }
  }

  const GridSpec grid = pm.grid(opt.quadrature_order);
  if (grid.total_points() > opt.grid_limit)
    throw CapacityError("truncate: grid of " + std::to_string(grid.total_points()) + " points exceeds the limit of " +
                        std::to_string(opt.grid_limit));
  const auto values = evaluate_on_grid(f, grid, opt.threads);
  const auto w = grid_weights(grid);
  const auto head_values = marginal_tensor(values, grid, u);
  std::size_t head_size = head_values.size();
  const std::size_t tail_size = values.size() / head_size;
  double tail_mse = 0.0;
  double var = 0.0;
  double mean = 0.0;
  for (std::size_t p = 0; p < values.size(); ++p) mean += w[p] * values[p];
  for (std::size_t p = 0; p < values.size(); ++p) {
    double d = values[p] - head_values[p / tail_size];
    tail_mse += w[p] * d * d;
    var += w[p] * (values[p] - mean) * (values[p] - mean);
  }
  out.tail_mse = tail_mse;
  if (!m) return out;

  std::vector<AxisRule> head_axes(grid.axes().begin(), grid.axes().begin() + static_cast<long>(n));
  const GridSpec head_grid(std::move(head_axes));
  const auto dec = project_grid_values(head_values, head_grid, *m, opt.threads, opt.term_cap);
  const auto fitted = projection_on_grid(dec);
  const auto hw = grid_weights(head_grid);
  double resid = 0.0;
  for (std::size_t p = 0; p < head_size; ++p) resid += hw[p] * (head_values[p] - fitted[p]) * (head_values[p] - fitted[p]);
  double total = 0.0;
  for (std::size_t p = 0; p < values.size(); ++p) {
    double d = values[p] - fitted[p / tail_size];
    total += w[p] * d * d;
  }
  if (std::abs(total - (resid + tail_mse)) > 1e-8 * std::max(1.0, var))
    throw Error("truncate: error split is not orthogonal (total " + std::to_string(total) + " vs " +
                std::to_string(resid + tail_mse) + ")");
  out.anova_residual = resid;
  out.total_mse = total;
  return out;
}

}  // namespace anova
