#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "anova/error.hpp"
#include "anova/quadrature.hpp"
#include "anova/rng.hpp"

namespace anova {

namespace detail {

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// Acklam's rational approximation followed by one Halley step.
inline double std_normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement; the tail branch uses the complementary cdf for accuracy
  double e = (p < 0.5) ? std_normal_cdf(x) - p : (1.0 - p) - 0.5 * std::erfc(x / std::numbers::sqrt2);
  double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

}  // namespace detail

/// A probability density tabulated on a bounded interval. The cdf is kept as
/// cumulative panel masses of a composite Gauss-Legendre rule.
class DensityTable {
 public:
  DensityTable(std::function<double(double)> raw_pdf, double lo, double hi, std::string label,
               std::size_t panels = 256)
      : raw_(std::move(raw_pdf)), lo_(lo), hi_(hi), label_(std::move(label)), panel_rule_(gauss_legendre(10)) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
      throw InvalidArgument("DensityTable: support must be a finite interval");
    if (panels == 0) throw InvalidArgument("DensityTable: need at least one panel");
    width_ = (hi - lo) / static_cast<double>(panels);
    cumulative_.assign(panels + 1, 0.0);
    for (std::size_t p = 0; p < panels; ++p) {
      double a = lo + width_ * static_cast<double>(p);
      cumulative_[p + 1] = cumulative_[p] + raw_mass(a, a + width_);
    }
    norm_ = cumulative_.back();
    if (!(norm_ > 0.0) || !std::isfinite(norm_)) throw InvalidArgument("DensityTable: density has no mass");
    for (auto& c : cumulative_) c /= norm_;
    cumulative_.back() = 1.0;
  }

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  const std::string& label() const noexcept { return label_; }

  double pdf(double t) const {
    if (t < lo_ || t > hi_) return 0.0;
    return raw_(t) / norm_;
  }

  double cdf(double t) const {
    if (t <= lo_) return 0.0;
    if (t >= hi_) return 1.0;
    auto p = std::min<std::size_t>(static_cast<std::size_t>((t - lo_) / width_), cumulative_.size() - 2);
    double a = lo_ + width_ * static_cast<double>(p);
    return std::clamp(cumulative_[p] + raw_mass(a, t) / norm_, 0.0, 1.0);
  }

  double quantile(double u) const {
    if (u <= 0.0) return lo_;
    if (u >= 1.0) return hi_;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    std::size_t p = static_cast<std::size_t>(std::distance(cumulative_.begin(), it)) - 1;
    p = std::min(p, cumulative_.size() - 2);
    double a = lo_ + width_ * static_cast<double>(p);
    double b = a + width_;
    for (int it2 = 0; it2 < 80 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it2) {
      double mid = 0.5 * (a + b);
      (cdf(mid) < u ? a : b) = mid;
    }
    return 0.5 * (a + b);
  }

  /// E g(X) by the composite panel rule.
  template <class F>
  double expect(F&& g) const {
    double s = 0.0;
    for (std::size_t p = 0; p + 1 < cumulative_.size(); ++p) {
      double a = lo_ + width_ * static_cast<double>(p);
      double half = 0.5 * width_;
      for (std::size_t k = 0; k < panel_rule_.size(); ++k) {
        double x = a + half * (1.0 + panel_rule_.nodes[k]);
        s += half * panel_rule_.weights[k] * raw_(x) * g(x);
      }
    }
    return s / norm_;
  }

 private:
  double raw_mass(double a, double b) const {
    double half = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t k = 0; k < panel_rule_.size(); ++k) s += panel_rule_.weights[k] * raw_(a + half * (1.0 + panel_rule_.nodes[k]));
    return s * half;
  }

  std::function<double(double)> raw_;
  double lo_, hi_;
  std::string label_;
  AxisRule panel_rule_;
  double width_ = 0.0;
  double norm_ = 1.0;
  std::vector<double> cumulative_;
};

/// A univariate marginal distribution p_i with its cdf P_i.
class Marginal {
 public:
  struct Uniform {
    double a, b;
  };
  struct Normal {
    double mean, variance;
  };
  /// Piecewise-linear quantile through (prob, value) pairs, constant beyond the ends.
  struct Empirical {
    std::vector<double> probs;
    std::vector<double> values;
  };
  struct Tabulated {
    std::shared_ptr<const DensityTable> table;
  };
  using Kind = std::variant<Uniform, Normal, Empirical, Tabulated>;

  static constexpr std::size_t kDefaultQuadratureOrder = 16;

  static Marginal uniform(double a, double b, std::size_t order = kDefaultQuadratureOrder) {
    if (!(a < b) || !std::isfinite(a) || !std::isfinite(b))
      throw InvalidArgument("uniform marginal needs finite a < b");
    return Marginal(Uniform{a, b}, order);
  }

  static Marginal normal(double mean, double variance, std::size_t order = kDefaultQuadratureOrder) {
    if (!(variance > 0.0) || !std::isfinite(variance) || !std::isfinite(mean))
      throw InvalidArgument("normal marginal needs finite mean and positive variance");
    return Marginal(Normal{mean, variance}, order);
  }

  static Marginal empirical(std::vector<double> probs, std::vector<double> values,
                            std::size_t order = kDefaultQuadratureOrder) {
    if (probs.size() != values.size() || probs.size() < 2)
      throw InvalidArgument("empirical marginal needs at least two (prob, value) pairs");
    for (std::size_t k = 0; k < probs.size(); ++k) {
      if (!(probs[k] > 0.0 && probs[k] < 1.0)) throw InvalidArgument("empirical probabilities must lie in (0,1)");
      if (k > 0 && !(probs[k] > probs[k - 1]))
        throw InvalidArgument("empirical probabilities must strictly increase");
      if (k > 0 && values[k] < values[k - 1]) throw InvalidArgument("empirical values must be sorted");
      if (!std::isfinite(values[k])) throw InvalidArgument("empirical values must be finite");
    }
    if (!(values.back() > values.front())) throw InvalidArgument("empirical marginal needs two distinct values");
    return Marginal(Empirical{std::move(probs), std::move(values)}, order);
  }

  static Marginal tabulated(std::shared_ptr<const DensityTable> table, std::size_t order = kDefaultQuadratureOrder) {
    if (!table) throw InvalidArgument("tabulated marginal needs a table");
    return Marginal(Tabulated{std::move(table)}, order);
  }

  const Kind& kind() const noexcept { return kind_; }
  std::size_t quadrature_order() const noexcept { return order_; }

  Marginal with_order(std::size_t order) const {
    Marginal m = *this;
    m.order_ = order;
    return m;
  }

  double pdf(double t) const {
    return std::visit(
        [t](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Uniform>) {
            return (t >= k.a && t <= k.b) ? 1.0 / (k.b - k.a) : 0.0;
          } else if constexpr (std::is_same_v<K, Normal>) {
            double sd = std::sqrt(k.variance);
            return detail::std_normal_pdf((t - k.mean) / sd) / sd;
          } else if constexpr (std::is_same_v<K, Empirical>) {
            auto it = std::upper_bound(k.values.begin(), k.values.end(), t);
            std::size_t j = static_cast<std::size_t>(it - k.values.begin());
            if (j == 0 || j == k.values.size()) return 0.0;
            return (k.probs[j] - k.probs[j - 1]) / (k.values[j] - k.values[j - 1]);
          } else {
            return k.table->pdf(t);
          }
        },
        kind_);
  }

  /// P(X <= t); right-continuous, with cdf(-inf)=0 and cdf(+inf)=1.
  double cdf(double t) const {
    if (std::isnan(t)) throw InvalidArgument("cdf: NaN argument");
    return std::visit(
        [t](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Uniform>) {
            return std::clamp((t - k.a) / (k.b - k.a), 0.0, 1.0);
          } else if constexpr (std::is_same_v<K, Normal>) {
            if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
            return detail::std_normal_cdf((t - k.mean) / std::sqrt(k.variance));
          } else if constexpr (std::is_same_v<K, Empirical>) {
            // clamps to 0 below and 1 above the table
            auto it = std::upper_bound(k.values.begin(), k.values.end(), t);
            std::size_t j = static_cast<std::size_t>(it - k.values.begin());
            if (j == 0) return 0.0;
            if (j == k.values.size()) return 1.0;
            double frac = (t - k.values[j - 1]) / (k.values[j] - k.values[j - 1]);
            return k.probs[j - 1] + (k.probs[j] - k.probs[j - 1]) * frac;
          } else {
            return k.table->cdf(t);
          }
        },
        kind_);
  }

  double quantile(double u) const {
    if (!(u >= 0.0 && u <= 1.0)) throw InvalidArgument("quantile: probability outside [0,1]");
    return std::visit(
        [u](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Uniform>) {
            return k.a + u * (k.b - k.a);
          } else if constexpr (std::is_same_v<K, Normal>) {
            return k.mean + std::sqrt(k.variance) * detail::std_normal_quantile(u);
          } else if constexpr (std::is_same_v<K, Empirical>) {
            if (u <= k.probs.front()) return k.values.front();
            if (u >= k.probs.back()) return k.values.back();
            auto it = std::upper_bound(k.probs.begin(), k.probs.end(), u);
            std::size_t j = static_cast<std::size_t>(it - k.probs.begin());
            double frac = (u - k.probs[j - 1]) / (k.probs[j] - k.probs[j - 1]);
            return k.values[j - 1] + (k.values[j] - k.values[j - 1]) * frac;
          } else {
            return k.table->quantile(u);
          }
        },
        kind_);
  }

  double mean() const {
    return std::visit(
        [](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Uniform>) {
            return 0.5 * (k.a + k.b);
          } else if constexpr (std::is_same_v<K, Normal>) {
            return k.mean;
          } else if constexpr (std::is_same_v<K, Empirical>) {
            return empirical_moment(k, 1);
          } else {
            return k.table->expect([](double x) { return x; });
          }
        },
        kind_);
  }

  double variance() const {
    return std::visit(
        [this](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Uniform>) {
            return (k.b - k.a) * (k.b - k.a) / 12.0;
          } else if constexpr (std::is_same_v<K, Normal>) {
            return k.variance;
          } else if constexpr (std::is_same_v<K, Empirical>) {
            double mu = empirical_moment(k, 1);
            return std::max(0.0, empirical_moment(k, 2) - mu * mu);
          } else {
            double mu = mean();
            return k.table->expect([mu](double x) { return (x - mu) * (x - mu); });
          }
        },
        kind_);
  }

  double stddev() const { return std::sqrt(variance()); }

  /// Closed support hull (infinite for normal).
  std::pair<double, double> support() const {
    return std::visit(
        [](const auto& k) -> std::pair<double, double> {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Uniform>) {
            return {k.a, k.b};
          } else if constexpr (std::is_same_v<K, Normal>) {
            return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
          } else if constexpr (std::is_same_v<K, Empirical>) {
            return {k.values.front(), k.values.back()};
          } else {
            return {k.table->lo(), k.table->hi()};
          }
        },
        kind_);
  }

  /// Finite box used for probing and plotting; mean +- 3 sd for normal.
  std::pair<double, double> probe_box() const {
    if (const auto* n = std::get_if<Normal>(&kind_)) {
      double sd = std::sqrt(n->variance);
      return {n->mean - 3.0 * sd, n->mean + 3.0 * sd};
    }
    return support();
  }

  bool contains(double t) const {
    auto [lo, hi] = support();
    return t >= lo && t <= hi;
  }

  /// Probability rule with `order` nodes (0 = this marginal's quadrature_order).
  AxisRule rule(std::size_t order = 0) const {
    if (order == 0) order = order_;
    return std::visit(
        [order](const auto& k) -> AxisRule {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Uniform>) {
            AxisRule r = gauss_legendre(order, k.a, k.b);
            for (auto& w : r.weights) w /= (k.b - k.a);
            return r;
          } else if constexpr (std::is_same_v<K, Normal>) {
            AxisRule r = gauss_hermite_normal(order);
            double sd = std::sqrt(k.variance);
            for (auto& x : r.nodes) x = k.mean + sd * x;
            return r;
          } else if constexpr (std::is_same_v<K, Empirical>) {
            // Gauss-Legendre in probability space pushed through the quantile
            AxisRule r = gauss_legendre(order, 0.0, 1.0);
            Marginal tmp(k, order);
            for (auto& x : r.nodes) x = tmp.quantile(x);
            return r;
          } else {
            AxisRule r = gauss_legendre(order, k.table->lo(), k.table->hi());
            double s = 0.0;
            for (std::size_t j = 0; j < r.size(); ++j) {
              r.weights[j] *= k.table->pdf(r.nodes[j]);
              s += r.weights[j];
            }
            for (auto& w : r.weights) w /= s;
            return r;
          }
        },
        kind_);
  }

  /// Inverse-cdf draw from a keyed stream.
  double sample(KeyedStream& stream) const { return quantile(stream.next_uniform()); }

  /// Flag-grammar description such as "uniform:-1:1".
  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    std::visit(
        [&os](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Uniform>) {
            os << "uniform:" << k.a << ':' << k.b;
          } else if constexpr (std::is_same_v<K, Normal>) {
            os << "normal:" << k.mean << ':' << k.variance;
          } else if constexpr (std::is_same_v<K, Empirical>) {
            os << "empirical:" << k.values.size() << "pts:[" << k.values.front() << ',' << k.values.back() << ']';
          } else {
            os << "tabulated:" << k.table->label();
          }
        },
        kind_);
    return os.str();
  }

  /// Breakpoints for piecewise quadrature of cdf-based integrands, plus the
  /// default finite integration window.
  std::vector<double> integration_breakpoints() const {
    std::vector<double> bp;
    std::visit(
        [&bp](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Uniform>) {
            bp = {k.a, k.b};
          } else if constexpr (std::is_same_v<K, Normal>) {
            // +-12 sd leaves tail mass below 1e-32
            double sd = std::sqrt(k.variance);
            for (int j = -12; j <= 12; ++j) bp.push_back(k.mean + sd * j);
          } else if constexpr (std::is_same_v<K, Empirical>) {
            bp = k.values;
            bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
          } else {
            for (int j = 0; j <= 32; ++j) bp.push_back(k.table->lo() + (k.table->hi() - k.table->lo()) * j / 32.0);
          }
        },
        kind_);
    return bp;
  }

  bool is_normal() const noexcept { return std::holds_alternative<Normal>(kind_); }

  friend bool operator==(const Marginal& x, const Marginal& y) {
    if (x.kind_.index() != y.kind_.index()) return false;
    return std::visit(
        [&y](const auto& k) -> bool {
          using K = std::decay_t<decltype(k)>;
          const auto& o = std::get<K>(y.kind_);
          if constexpr (std::is_same_v<K, Uniform>) {
            return k.a == o.a && k.b == o.b;
          } else if constexpr (std::is_same_v<K, Normal>) {
            return k.mean == o.mean && k.variance == o.variance;
          } else if constexpr (std::is_same_v<K, Empirical>) {
            return k.probs == o.probs && k.values == o.values;
          } else {
            return k.table == o.table;
          }
        },
        x.kind_);
  }

 private:
  Marginal(Kind k, std::size_t order) : kind_(std::move(k)), order_(order) {
    if (order_ == 0) throw InvalidArgument("quadrature order must be positive");
  }

  // exact moments of the piecewise-linear quantile function
  static double empirical_moment(const Empirical& k, int power) {
    const auto& p = k.probs;
    const auto& v = k.values;
    auto pw = [power](double x) { return power == 1 ? x : x * x; };
    double s = p.front() * pw(v.front()) + (1.0 - p.back()) * pw(v.back());
    for (std::size_t j = 0; j + 1 < p.size(); ++j) {
      double dp = p[j + 1] - p[j];
      double a = v[j];
      double b = v[j + 1];
      s += power == 1 ? dp * 0.5 * (a + b) : dp * (a * a + a * b + b * b) / 3.0;
    }
    return s;
  }

  Kind kind_;
  std::size_t order_;
};

/// Ordered list of marginals representing the density prod_i p_i(x_i).
class ProductMeasure {
 public:
  explicit ProductMeasure(std::vector<Marginal> marginals) : marginals_(std::move(marginals)) {
    if (marginals_.empty()) throw InvalidArgument("ProductMeasure needs at least one marginal");
  }

  static ProductMeasure homogeneous(const Marginal& m, std::size_t n) {
    if (n == 0) throw InvalidArgument("ProductMeasure needs at least one marginal");
    return ProductMeasure(std::vector<Marginal>(n, m));
  }

  std::size_t dims() const noexcept { return marginals_.size(); }
  const Marginal& operator[](std::size_t i) const { return marginals_.at(i); }
  const std::vector<Marginal>& marginals() const noexcept { return marginals_; }

  /// Tensor grid from each marginal's rule (order 0 = per-marginal default).
  GridSpec grid(std::size_t order = 0) const {
    std::vector<AxisRule> axes;
    axes.reserve(marginals_.size());
    for (const auto& m : marginals_) axes.push_back(m.rule(order));
    return GridSpec(std::move(axes));
  }

  ProductMeasure with_order(std::size_t order) const {
    std::vector<Marginal> ms;
    for (const auto& m : marginals_) ms.push_back(m.with_order(order));
    return ProductMeasure(std::move(ms));
  }

  /// Leading `n` marginals.
  ProductMeasure prefix(std::size_t n) const {
    if (n == 0 || n > marginals_.size()) throw InvalidArgument("ProductMeasure::prefix: bad length");
    return ProductMeasure(std::vector<Marginal>(marginals_.begin(), marginals_.begin() + static_cast<long>(n)));
  }

  double density(std::span<const double> x) const {
    double p = 1.0;
    for (std::size_t i = 0; i < marginals_.size(); ++i) p *= marginals_[i].pdf(x[i]);
    return p;
  }

 private:
  std::vector<Marginal> marginals_;
};

/// k_i(x,t) = P_i(t) - H(t - x) with H(s) = 1 for s >= 0.
inline double kernel_k(const Marginal& m, double x, double t) {
  return m.cdf(t) - (t - x >= 0.0 ? 1.0 : 0.0);
}

/// G_i(t,s) = P_i(min(t,s)) (1 - P_i(max(t,s))).
inline double bridge_G(const Marginal& m, double t, double s) {
  return m.cdf(std::min(t, s)) * (1.0 - m.cdf(std::max(t, s)));
}

struct GammaOptions {
  /// Gauss-Legendre nodes per panel on the first pass; refined by doubling.
  std::size_t panel_order = 8;
  /// Refinement passes allowed before giving up.
  int max_refinements = 6;
  /// Accepted |coarse - fine|; 0 picks 1e-8, or 1e-6 when a normal marginal is present.
  double tolerance = 0.0;
  /// Restricts the (t,s) integration square; default covers all mass.
  std::optional<std::pair<double, double>> window;
};

struct GammaResult {
  double value = 0.0;
  double coarse = 0.0;
  double fine = 0.0;
  std::size_t nodes_per_axis = 0;
  std::pair<double, double> window;
};

namespace detail {

// 2 * int_{lo}^{hi} ds int_{lo}^{s} dt max_i P_i(t) (1 - P_i(s)) on the given panels.
inline double gamma_pass(const std::vector<Marginal>& distinct, const std::vector<double>& bp, std::size_t q) {
  const AxisRule ref = gauss_legendre(q);
  const std::size_t panels = bp.size() - 1;
  const std::size_t nm = distinct.size();
  // cdf at every full-panel node
  std::vector<double> tn(panels * q), tw(panels * q);
  std::vector<double> cdfs(panels * q * nm);
  for (std::size_t p = 0; p < panels; ++p) {
    double half = 0.5 * (bp[p + 1] - bp[p]);
    for (std::size_t k = 0; k < q; ++k) {
      std::size_t j = p * q + k;
      tn[j] = bp[p] + half * (1.0 + ref.nodes[k]);
      tw[j] = half * ref.weights[k];
      for (std::size_t i = 0; i < nm; ++i) cdfs[j * nm + i] = distinct[i].cdf(tn[j]);
    }
  }
  // identical marginals: inner integral is a prefix sum of w * P(t)
  std::vector<double> prefix;
  if (nm == 1) {
    prefix.assign(panels + 1, 0.0);
    for (std::size_t p = 0; p < panels; ++p) {
      double s = 0.0;
      for (std::size_t k = 0; k < q; ++k) s += tw[p * q + k] * cdfs[p * q + k];
      prefix[p + 1] = prefix[p] + s;
    }
  }
  std::vector<double> tail(nm);
  double total = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    for (std::size_t k = 0; k < q; ++k) {
      const std::size_t j = p * q + k;
      const double s = tn[j];
      for (std::size_t i = 0; i < nm; ++i) tail[i] = 1.0 - cdfs[j * nm + i];
      double inner = 0.0;
      if (nm == 1) {
        inner = prefix[p] * tail[0];
      } else {
        for (std::size_t jj = 0; jj < p * q; ++jj) {
          double best = 0.0;
          for (std::size_t i = 0; i < nm; ++i) best = std::max(best, cdfs[jj * nm + i] * tail[i]);
          inner += tw[jj] * best;
        }
      }
      // partial panel [bp[p], s]
      double half = 0.5 * (s - bp[p]);
      for (std::size_t kk = 0; kk < q; ++kk) {
        double t = bp[p] + half * (1.0 + ref.nodes[kk]);
        double best = 0.0;
        for (std::size_t i = 0; i < nm; ++i) best = std::max(best, distinct[i].cdf(t) * tail[i]);
        inner += half * ref.weights[kk] * best;
      }
      total += tw[j] * inner;
    }
  }
  return 2.0 * total;
}

}  // namespace detail

/// gamma = int int max_i G_i(t,s) dt ds by piecewise tensor Gauss-Legendre
/// quadrature on the lower triangle t <= s (the integrand is symmetric and
/// kinked on the diagonal).
inline GammaResult gamma_constant(const ProductMeasure& pm, const GammaOptions& opt = {}) {
  std::vector<Marginal> distinct;
  for (const auto& m : pm.marginals())
    if (std::find(distinct.begin(), distinct.end(), m) == distinct.end()) distinct.push_back(m);

  std::vector<double> bp;
  bool any_normal = false;
  for (const auto& m : distinct) {
    auto b = m.integration_breakpoints();
    bp.insert(bp.end(), b.begin(), b.end());
    any_normal = any_normal || m.is_normal();
  }
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
  double lo = bp.front();
  double hi = bp.back();
  if (opt.window) {
    lo = opt.window->first;
    hi = opt.window->second;
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
      throw InvalidArgument("gamma_constant: window must be a finite interval");
    std::vector<double> clipped{lo};
    for (double b : bp)
      if (b > lo && b < hi) clipped.push_back(b);
    clipped.push_back(hi);
    bp = std::move(clipped);
  }
  const double tol = opt.tolerance > 0.0 ? opt.tolerance : (any_normal ? 1e-6 : 1e-8);

  std::size_t q = std::max<std::size_t>(opt.panel_order, 1);
  double coarse = detail::gamma_pass(distinct, bp, q);
  double fine = coarse;
  for (int r = 0; r <= opt.max_refinements; ++r) {
    fine = detail::gamma_pass(distinct, bp, 2 * q);
    if (std::abs(fine - coarse) < tol) {
      return GammaResult{fine, coarse, fine, (bp.size() - 1) * 2 * q, {lo, hi}};
    }
    q *= 2;
    coarse = fine;
  }
  throw QuadratureError("gamma_constant: quadrature did not converge", coarse, fine);
}

/// Upper bound gamma_m <= gamma^m used in place of the exact multi-index constant.
inline double gamma_m_bound(double gamma, int m) { return std::pow(gamma, m); }

/// Empirical marginal from one numeric CSV column (header optional). The
/// quantile table is the sorted sample at plotting positions (k - 0.5)/N.
inline Marginal empirical_from_csv(const std::string& path, std::size_t column,
                                   std::size_t order = Marginal::kDefaultQuadratureOrder) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV file '" + path + "'");
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (column >= cells.size())
      throw IoError(path + ":" + std::to_string(line_no) + ": missing column " + std::to_string(column));
    const std::string& c = cells[column];
    std::size_t used = 0;
    double v = 0.0;
    bool ok = true;
    try {
      v = std::stod(c, &used);
      ok = c.find_first_not_of(" \t", used) == std::string::npos && std::isfinite(v);
    } catch (const std::exception&) {
      ok = false;
    }
    if (!ok) {
      if (values.empty() && line_no == 1) continue;  // header row
      throw IoError(path + ":" + std::to_string(line_no) + ": non-numeric cell '" + c + "'");
    }
    values.push_back(v);
  }
  if (values.empty()) throw IoError("CSV file '" + path + "' has no data rows");
  std::sort(values.begin(), values.end());
  if (values.front() == values.back()) throw IoError("CSV column needs at least two distinct values");
  const double n = static_cast<double>(values.size());
  std::vector<double> probs(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) probs[k] = (static_cast<double>(k) + 0.5) / n;
  return Marginal::empirical(std::move(probs), std::move(values), order);
}

}  // namespace anova
