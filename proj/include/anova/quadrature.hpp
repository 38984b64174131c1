#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "anova/error.hpp"

namespace anova {

/// Nodes and probability weights (summing to one) along one axis.
struct AxisRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const noexcept { return nodes.size(); }

  /// Expectation of g under the discrete measure.
  template <class F>
  double expect(F&& g) const {
    double s = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) s += weights[k] * g(nodes[k]);
    return s;
  }
};

/// Gauss-Legendre nodes/weights on [-1,1] (weights sum to 2).
inline AxisRule gauss_legendre(std::size_t order) {
  if (order == 0) throw InvalidArgument("gauss_legendre: order must be positive");
  AxisRule r;
  r.nodes.resize(order);
  r.weights.resize(order);
  const std::size_t half = (order + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(order) + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (std::size_t j = 1; j <= order; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / static_cast<double>(j);
      }
      pp = static_cast<double>(order) * (z * p1 - p2) / (z * z - 1.0);
      double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // recompute derivative at the converged root
    double p1 = 1.0;
    double p2 = 0.0;
    for (std::size_t j = 1; j <= order; ++j) {
      double p3 = p2;
      p2 = p1;
      p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / static_cast<double>(j);
    }
    pp = static_cast<double>(order) * (z * p1 - p2) / (z * z - 1.0);
    double w = 2.0 / ((1.0 - z * z) * pp * pp);
    r.nodes[i] = -z;
    r.nodes[order - 1 - i] = z;
    r.weights[i] = w;
    r.weights[order - 1 - i] = w;
  }
  if (order % 2 == 1) r.nodes[order / 2] = 0.0;
  return r;
}

/// Gauss-Legendre rule mapped to [a,b]; weights sum to b-a.
inline AxisRule gauss_legendre(std::size_t order, double a, double b) {
  AxisRule r = gauss_legendre(order);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  for (std::size_t k = 0; k < r.size(); ++k) {
    r.nodes[k] = mid + half * r.nodes[k];
    r.weights[k] *= half;
  }
  return r;
}

/// Probabilists' Gauss-Hermite rule: expectation under the standard normal.
/// Weights sum to one.
inline AxisRule gauss_hermite_normal(std::size_t order) {
  if (order == 0) throw InvalidArgument("gauss_hermite_normal: order must be positive");
  // physicists' rule for weight exp(-x^2) via orthonormal recurrence, then rescaled
  const double pim4 = 0.7511255444649425;  // pi^(-1/4)
  const int n = static_cast<int>(order);
  std::vector<double> x(order), w(order);
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    else if (i == 1)
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * x[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * x[1];
    else
      z = 2.0 * z - x[i - 2];
    double pp = 0.0;
    for (int it = 0; it < 200; ++it) {
      double p1 = pim4;
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = 2.0 / (pp * pp);
    w[n - 1 - i] = w[i];
  }
  if (n % 2 == 1) x[n / 2] = 0.0;
  AxisRule r;
  r.nodes.resize(order);
  r.weights.resize(order);
  double total = 0.0;
  for (int k = 0; k < n; ++k) total += w[k];
  // ascending order, x -> sqrt(2) x for weight exp(-x^2/2)
  for (int k = 0; k < n; ++k) {
    r.nodes[k] = std::numbers::sqrt2 * x[n - 1 - k];
    r.weights[k] = w[n - 1 - k] / total;
  }
  return r;
}

/// Barycentric Lagrange interpolation through a fixed node set.
class BarycentricAxis {
 public:
  BarycentricAxis() = default;
  explicit BarycentricAxis(std::vector<double> nodes) : nodes_(std::move(nodes)), bw_(nodes_.size()) {
    const std::size_t n = nodes_.size();
    std::vector<double> logs(n, 0.0);
    std::vector<int> signs(n, 1);
    double max_log = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        if (k == j) continue;
        double d = nodes_[j] - nodes_[k];
        if (d == 0.0) throw InvalidArgument("BarycentricAxis: duplicate nodes");
        logs[j] -= std::log(std::abs(d));
        if (d < 0) signs[j] = -signs[j];
      }
      max_log = std::max(max_log, logs[j]);
    }
    for (std::size_t j = 0; j < n; ++j) bw_[j] = signs[j] * std::exp(logs[j] - max_log);
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<double>& nodes() const noexcept { return nodes_; }

  /// Coefficients c with p(x) = sum_j c_j y_j for the interpolant p.
  std::vector<double> coefficients(double x) const {
    std::vector<double> c(nodes_.size(), 0.0);
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
      if (x == nodes_[j]) {
        c[j] = 1.0;
        return c;
      }
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
      c[j] = bw_[j] / (x - nodes_[j]);
      denom += c[j];
    }
    for (auto& v : c) v /= denom;
    return c;
  }

 private:
  std::vector<double> nodes_;
  std::vector<double> bw_;
};

/// Tensor-product discretization: one probability rule per axis.
class GridSpec {
 public:
  GridSpec() = default;
  explicit GridSpec(std::vector<AxisRule> axes) : axes_(std::move(axes)) { validate(); }

  std::size_t dims() const noexcept { return axes_.size(); }
  const AxisRule& axis(std::size_t i) const { return axes_.at(i); }
  const std::vector<AxisRule>& axes() const noexcept { return axes_; }

  /// Number of grid points, saturating at SIZE_MAX.
  std::size_t total_points() const noexcept {
    std::size_t t = 1;
    for (const auto& a : axes_) {
      if (a.size() != 0 && t > SIZE_MAX / a.size()) return SIZE_MAX;
      t *= a.size();
    }
    return t;
  }

  void validate() const {
    for (std::size_t i = 0; i < axes_.size(); ++i) {
      const auto& a = axes_[i];
      if (a.nodes.empty() || a.nodes.size() != a.weights.size())
        throw InvalidArgument("GridSpec: axis " + std::to_string(i) + " has mismatched nodes/weights");
      double s = 0.0;
      for (double w : a.weights) {
        if (!(w > 0.0)) throw InvalidArgument("GridSpec: nonpositive weight on axis " + std::to_string(i));
        s += w;
      }
      if (std::abs(s - 1.0) > 1e-12)
        throw InvalidArgument("GridSpec: weights on axis " + std::to_string(i) + " sum to " + std::to_string(s));
    }
  }

 private:
  std::vector<AxisRule> axes_;
};

/// Row-major strides (last axis fastest) for a shape.
inline std::vector<std::size_t> row_major_strides(std::span<const std::size_t> shape) {
  std::vector<std::size_t> st(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
  return st;
}

/// Advances a multi-index in row-major order; returns false after the last one.
inline bool next_multi_index(std::vector<std::size_t>& idx, std::span<const std::size_t> shape) {
  for (std::size_t i = idx.size(); i-- > 0;) {
    if (++idx[i] < shape[i]) return true;
    idx[i] = 0;
  }
  return false;
}

}  // namespace anova
