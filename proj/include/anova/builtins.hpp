#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "anova/error.hpp"
#include "anova/target.hpp"

namespace anova {

/// Product of factors with known first derivatives; the mixed derivative over
/// u is prod_{i in u} g_i' prod_{i not in u} g_i.
inline TargetFunction product_with_derivatives(std::vector<Factor> factors, std::vector<Factor> derivatives) {
  if (factors.size() != derivatives.size()) throw InvalidArgument("product_with_derivatives: size mismatch");
  TargetFunction f = TargetFunction::from_factors(factors);
  auto g = std::make_shared<const std::vector<Factor>>(std::move(factors));
  auto dg = std::make_shared<const std::vector<Factor>>(std::move(derivatives));
  f.mixed_derivative = [g, dg](std::span<const double> x, const SubsetIndex& u) {
    double p = 1.0;
    for (std::size_t i = 0; i < g->size(); ++i) p *= u.contains(i) ? (*dg)[i](x[i]) : (*g)[i](x[i]);
    return p;
  };
  return f;
}

/// x_1 x_2 ... x_n.
inline TargetFunction builtin_product(std::size_t n) {
  std::vector<Factor> g(n, [](double t) { return t; });
  std::vector<Factor> dg(n, [](double) { return 1.0; });
  return product_with_derivatives(std::move(g), std::move(dg));
}

/// exp(-sum x_i^2 / n).
inline TargetFunction builtin_gauss(std::size_t n) {
  const double inv = 1.0 / static_cast<double>(n);
  std::vector<Factor> g(n, [inv](double t) { return std::exp(-t * t * inv); });
  std::vector<Factor> dg(n, [inv](double t) { return -2.0 * t * inv * std::exp(-t * t * inv); });
  return product_with_derivatives(std::move(g), std::move(dg));
}

/// (1 + sin x_1)(1 + sin x_2)(1 + sin x_3); further coordinates are inert.
inline TargetFunction builtin_sinprod(std::size_t n) {
  std::vector<Factor> g;
  std::vector<Factor> dg;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < 3) {
      g.emplace_back([](double t) { return 1.0 + std::sin(t); });
      dg.emplace_back([](double t) { return std::cos(t); });
    } else {
      g.emplace_back([](double) { return 1.0; });
      dg.emplace_back([](double) { return 0.0; });
    }
  }
  return product_with_derivatives(std::move(g), std::move(dg));
}

/// (x_1 + ... + x_n) / n.
inline TargetFunction builtin_mean(std::size_t n) {
  TargetFunction f;
  f.arity = n;
  const double inv = 1.0 / static_cast<double>(n);
  f.evaluate = [inv](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s * inv;
  };
  f.mixed_derivative = [f_eval = f.evaluate, inv](std::span<const double> x, const SubsetIndex& u) {
    if (u.empty()) return f_eval(x);
    return u.size() == 1 ? inv : 0.0;
  };
  return f;
}

/// Smooth bump of radius 1/2 with phi(0) = 1/2.
inline double bump_phi(double r) {
  const double q = 2.0 * r;
  if (q >= 1.0) return 0.0;
  return 0.5 * std::exp(1.0 - 1.0 / (1.0 - q * q));
}

/// sum over cube vertices e of (-1)^{|e|} phi(||e - x||). Only the nearest
/// vertex can contribute since the bumps have radius 1/2.
inline TargetFunction builtin_bumps(std::size_t n) {
  TargetFunction f;
  f.arity = n;
  f.evaluate = [](std::span<const double> x) {
    double r2 = 0.0;
    int parity = 0;
    for (double v : x) {
      const double e = v >= 0.5 ? 1.0 : 0.0;
      parity ^= static_cast<int>(e);
      r2 += (v - e) * (v - e);
    }
    const double b = bump_phi(std::sqrt(r2));
    return parity ? -b : b;
  };
  return f;
}

inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = {"product", "gauss", "sinprod", "mean", "bumps"};
  return names;
}

inline TargetFunction make_builtin(const std::string& name, std::size_t n) {
  if (n == 0) throw InvalidArgument("builtin: dimension must be positive");
  if (name == "product") return builtin_product(n);
  if (name == "gauss") return builtin_gauss(n);
  if (name == "sinprod") return builtin_sinprod(n);
  if (name == "mean") return builtin_mean(n);
  if (name == "bumps") return builtin_bumps(n);
  throw InvalidArgument("unknown builtin function '" + name + "'");
}

}  // namespace anova
