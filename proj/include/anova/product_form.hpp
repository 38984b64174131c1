#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "anova/anova_core.hpp"
#include "anova/error.hpp"
#include "anova/marginals.hpp"
#include "anova/target.hpp"

namespace anova {

/// Closed-form decomposition of f(x) = prod_i g_i(x_i) under a product
/// measure. With c_i = E g_i and s_i = var g_i, the component for u is
/// prod_{i in u} (g_i - c_i) prod_{i not in u} c_i and its variance is
/// prod_{i in u} s_i prod_{i not in u} c_i^2.
class ProductFormAnova {
 public:
  /// Moments come from each marginal's rule at `moment_order` nodes.
  ProductFormAnova(std::vector<Factor> factors, ProductMeasure pm, std::size_t moment_order = 64)
      : factors_(std::move(factors)), pm_(std::move(pm)) {
    if (factors_.size() != pm_.dims()) throw InvalidArgument("ProductFormAnova: factor count must match dimension");
    means_.resize(factors_.size());
    variances_.resize(factors_.size());
    // identical (factor, marginal) pairs cannot be detected through std::function,
    // so every axis gets its own moments
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      const AxisRule rule = pm_[i].rule(moment_order);
      const auto& g = factors_[i];
      double c = rule.expect(g);
      double s = rule.expect([&](double x) {
        double d = g(x) - c;
        return d * d;
      });
      if (!std::isfinite(c) || !std::isfinite(s)) throw Error("ProductFormAnova: factor moments are not finite");
      // spread below the rounding of the mean is a constant factor
      const double floor = 16.0 * std::numeric_limits<double>::epsilon() * std::abs(c);
      if (s <= floor * floor) s = 0.0;
      means_[i] = c;
      variances_[i] = s;
    }
  }

  /// Uses caller-supplied moments (e.g. known in closed form).
  ProductFormAnova(std::vector<Factor> factors, ProductMeasure pm, std::vector<double> means,
                   std::vector<double> variances)
      : factors_(std::move(factors)), pm_(std::move(pm)), means_(std::move(means)), variances_(std::move(variances)) {
    if (factors_.size() != pm_.dims() || means_.size() != pm_.dims() || variances_.size() != pm_.dims())
      throw InvalidArgument("ProductFormAnova: size mismatch");
  }

  std::size_t dims() const noexcept { return factors_.size(); }
  const std::vector<double>& means() const noexcept { return means_; }
  const std::vector<double>& variances() const noexcept { return variances_; }
  const ProductMeasure& measure() const noexcept { return pm_; }
  const std::vector<Factor>& factors() const noexcept { return factors_; }

  /// E(f) = prod_i c_i.
  double mean() const {
    double p = 1.0;
    for (double c : means_) p *= c;
    return p;
  }

  double term_variance(const SubsetIndex& u) const {
    u.check_within(dims());
    if (u.empty()) return 0.0;
    double p = 1.0;
    for (std::size_t i = 0; i < dims(); ++i) p *= u.contains(i) ? variances_[i] : means_[i] * means_[i];
    return p;
  }

  /// Total variance mass by interaction order: entry k is sum_{|u|=k} var(f_u).
  /// Coefficients of prod_i (c_i^2 + s_i z); all terms are nonnegative so no
  /// cancellation occurs.
  std::vector<double> variance_by_order() const {
    std::vector<double> e(dims() + 1, 0.0);
    e[0] = 1.0;
    for (std::size_t i = 0; i < dims(); ++i) {
      const double c2 = means_[i] * means_[i];
      for (std::size_t k = i + 2; k-- > 0;) e[k] = e[k] * c2 + (k > 0 ? e[k - 1] * variances_[i] : 0.0);
    }
    e[0] = 0.0;  // the constant term carries no variance
    return e;
  }

  double variance() const {
    double s = 0.0;
    for (double v : variance_by_order()) s += v;
    return s;
  }

  /// E((f - P_m f)^2) = sum_{|u| > m} var(f_u).
  double residual_after(std::size_t m) const {
    const auto e = variance_by_order();
    double s = 0.0;
    for (std::size_t k = m + 1; k < e.size(); ++k) s += e[k];
    return s;
  }

  /// For identical factors: sum_{k>m} C(n,k) s^k c^{2(n-k)} without subsets.
  static double identical_residual(std::size_t n, std::size_t m, double c, double s) {
    double total = 0.0;
    double binom = 1.0;
    for (std::size_t k = 0; k <= n; ++k) {
      if (k > m) total += binom * std::pow(s, static_cast<double>(k)) * std::pow(c * c, static_cast<double>(n - k));
      binom = binom * static_cast<double>(n - k) / static_cast<double>(k + 1);
    }
    return total;
  }

  /// (P_m f)(x) for every m at once: entry m of the result. Uses the
  /// coefficients of prod_i (c_i + a_i z) with a_i = g_i(x_i) - c_i.
  std::vector<double> projections_at(std::span<const double> x, std::size_t max_order) const {
    if (x.size() != dims()) throw InvalidArgument("projections_at: wrong point dimension");
    const std::size_t top = std::min(max_order, dims());
    std::vector<double> e(top + 1, 0.0);
    e[0] = 1.0;
    for (std::size_t i = 0; i < dims(); ++i) {
      const double c = means_[i];
      const double a = variances_[i] == 0.0 ? 0.0 : factors_[i](x[i]) - c;
      for (std::size_t k = std::min(i + 1, top) + 1; k-- > 0;) e[k] = e[k] * c + (k > 0 ? e[k - 1] * a : 0.0);
    }
    for (std::size_t k = 1; k <= top; ++k) e[k] += e[k - 1];
    return e;
  }

  double evaluate(std::span<const double> x) const {
    double p = 1.0;
    for (std::size_t i = 0; i < dims(); ++i) p *= factors_[i](x[i]);
    return p;
  }

  ProductTerm term(const SubsetIndex& u) const {
    u.check_within(dims());
    ProductTerm t;
    t.subset = u;
    for (std::size_t i = 0; i < dims(); ++i) {
      if (u.contains(i)) {
        t.factors.push_back(factors_[i]);
        t.centers.push_back(means_[i]);
      } else {
        t.scale *= means_[i];
      }
    }
    return t;
  }

  /// Materialized symbolic decomposition for orders <= m.
  AnovaDecomposition to_decomposition(std::size_t m, std::size_t term_cap = 200'000,
                                      std::size_t grid_order = 0) const {
    if (m > dims()) throw InvalidArgument("to_decomposition: order exceeds dimension");
    const std::uint64_t count = count_subsets(dims(), m);
    if (count > term_cap)
      throw CapacityError("product_form_anova: " + std::to_string(count) + " subsets exceed the cap of " +
                          std::to_string(term_cap));
    AnovaDecomposition dec;
    dec.measure = pm_;
    dec.grid = pm_.grid(grid_order);
    dec.order = m;
    dec.mean = mean();
    dec.backend = Backend::closed_form;
    dec.function_variance = variance();
    for (const auto& u : enumerate_subsets(dims(), m)) {
      dec.term_variance.emplace(u, term_variance(u));
      if (!u.empty()) dec.terms.emplace(u, term(u));
    }
    return dec;
  }

 private:
  std::vector<Factor> factors_;
  ProductMeasure pm_;
  std::vector<double> means_;
  std::vector<double> variances_;
};

/// Closed-form decomposition for a TargetFunction carrying a product descriptor.
inline ProductFormAnova product_form_anova(const TargetFunction& f, const ProductMeasure& pm,
                                           std::size_t moment_order = 64) {
  if (!f.product_form) throw InvalidArgument("product_form_anova: function has no product descriptor");
  return ProductFormAnova(*f.product_form, pm, moment_order);
}

}  // namespace anova
