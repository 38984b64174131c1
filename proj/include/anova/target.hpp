#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anova/error.hpp"
#include "anova/marginals.hpp"
#include "anova/rng.hpp"

namespace anova {

/// Strictly increasing list of zero-based coordinate positions.
class SubsetIndex {
 public:
  SubsetIndex() = default;
  SubsetIndex(std::initializer_list<std::size_t> idx) : SubsetIndex(std::vector<std::size_t>(idx)) {}
  explicit SubsetIndex(std::vector<std::size_t> idx) : idx_(std::move(idx)) {
    for (std::size_t k = 1; k < idx_.size(); ++k)
      if (!(idx_[k] > idx_[k - 1])) throw InvalidArgument("SubsetIndex must be strictly increasing");
  }

  std::size_t size() const noexcept { return idx_.size(); }
  bool empty() const noexcept { return idx_.empty(); }
  std::size_t operator[](std::size_t k) const { return idx_[k]; }
  auto begin() const noexcept { return idx_.begin(); }
  auto end() const noexcept { return idx_.end(); }
  const std::vector<std::size_t>& indices() const noexcept { return idx_; }

  bool contains(std::size_t i) const { return std::binary_search(idx_.begin(), idx_.end(), i); }

  /// Position of coordinate i within the subset, if present.
  std::optional<std::size_t> position(std::size_t i) const {
    auto it = std::lower_bound(idx_.begin(), idx_.end(), i);
    if (it == idx_.end() || *it != i) return std::nullopt;
    return static_cast<std::size_t>(it - idx_.begin());
  }

  void check_within(std::size_t arity) const {
    if (!idx_.empty() && idx_.back() >= arity)
      throw InvalidArgument("subset " + to_string() + " exceeds arity " + std::to_string(arity));
  }

  /// Complement within {0..n-1}.
  SubsetIndex complement(std::size_t n) const {
    std::vector<std::size_t> c;
    for (std::size_t i = 0; i < n; ++i)
      if (!contains(i)) c.push_back(i);
    return SubsetIndex(std::move(c));
  }

  /// Sub-subset selected by a bitmask over positions.
  SubsetIndex select(std::uint64_t mask) const {
    std::vector<std::size_t> v;
    for (std::size_t k = 0; k < idx_.size(); ++k)
      if (mask >> k & 1u) v.push_back(idx_[k]);
    return SubsetIndex(std::move(v));
  }

  /// One-based rendering, e.g. "{1,3}".
  std::string to_string() const {
    std::string s = "{";
    for (std::size_t k = 0; k < idx_.size(); ++k) {
      if (k) s += ',';
      s += std::to_string(idx_[k] + 1);
    }
    return s + "}";
  }

  /// Canonical order: by size, then lexicographically.
  friend std::strong_ordering operator<=>(const SubsetIndex& a, const SubsetIndex& b) {
    if (auto c = a.idx_.size() <=> b.idx_.size(); c != 0) return c;
    return a.idx_ <=> b.idx_;
  }
  friend bool operator==(const SubsetIndex&, const SubsetIndex&) = default;

 private:
  std::vector<std::size_t> idx_;
};

/// sum_{k <= m} C(n,k), saturating at UINT64_MAX.
inline std::uint64_t count_subsets(std::size_t n, std::size_t m) {
  std::uint64_t total = 0;
  std::uint64_t c = 1;
  for (std::size_t k = 0; k <= std::min(m, n); ++k) {
    if (total > UINT64_MAX - c) return UINT64_MAX;
    total += c;
    // C(n,k+1) = C(n,k) (n-k)/(k+1)
    unsigned __int128 next = static_cast<unsigned __int128>(c) * (n - k) / (k + 1);
    c = next > UINT64_MAX ? UINT64_MAX : static_cast<std::uint64_t>(next);
  }
  return total;
}

/// All subsets of {0..n-1} with |u| <= m in canonical order.
inline std::vector<SubsetIndex> enumerate_subsets(std::size_t n, std::size_t m) {
  std::vector<SubsetIndex> out;
  m = std::min(m, n);
  for (std::size_t k = 0; k <= m; ++k) {
    std::vector<std::size_t> c(k);
    for (std::size_t j = 0; j < k; ++j) c[j] = j;
    for (;;) {
      out.emplace_back(c);
      // next k-combination in lexicographic order
      std::size_t j = k;
      while (j > 0 && c[j - 1] == n - k + j - 1) --j;
      if (j == 0) break;
      ++c[j - 1];
      for (std::size_t t = j; t < k; ++t) c[t] = c[t - 1] + 1;
    }
  }
  return out;
}

using PointFunction = std::function<double(std::span<const double>)>;
using Factor = std::function<double(double)>;
/// d^{|u|} f / dx_u at a point.
using MixedDerivative = std::function<double(std::span<const double>, const SubsetIndex&)>;

/// Black-box f: R^n -> R with optional structure.
struct TargetFunction {
  std::size_t arity = 0;
  PointFunction evaluate;
  /// f(x) = prod_i g_i(x_i) when present.
  std::optional<std::vector<Factor>> product_form;
  MixedDerivative mixed_derivative;

  double operator()(std::span<const double> x) const { return evaluate(x); }

  static TargetFunction from_factors(std::vector<Factor> factors) {
    if (factors.empty()) throw InvalidArgument("from_factors: need at least one factor");
    TargetFunction f;
    f.arity = factors.size();
    auto shared = std::make_shared<const std::vector<Factor>>(factors);
    f.evaluate = [shared](std::span<const double> x) {
      double p = 1.0;
      for (std::size_t i = 0; i < shared->size(); ++i) p *= (*shared)[i](x[i]);
      return p;
    };
    f.product_form = std::move(factors);
    return f;
  }

  /// Checks evaluate() against the product descriptor at random points drawn
  /// from `pm`. Returns the largest absolute disagreement.
  double product_form_discrepancy(const ProductMeasure& pm, std::size_t points, std::uint64_t seed) const {
    if (!product_form) return 0.0;
    KeyedStream stream(hash_keys(seed, {0x70f0}));
    std::vector<double> x(arity);
    double worst = 0.0;
    for (std::size_t p = 0; p < points; ++p) {
      for (std::size_t i = 0; i < arity; ++i) x[i] = pm[i].sample(stream);
      double prod = 1.0;
      for (std::size_t i = 0; i < arity; ++i) prod *= (*product_form)[i](x[i]);
      worst = std::max(worst, std::abs(prod - evaluate(x)));
    }
    return worst;
  }
};

}  // namespace anova
