#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "anova/error.hpp"
#include "anova/marginals.hpp"
#include "anova/parallel.hpp"
#include "anova/quadrature.hpp"
#include "anova/rng.hpp"
#include "anova/target.hpp"

namespace anova {

enum class Backend { grid, monte_carlo, closed_form };

inline const char* to_string(Backend b) {
  switch (b) {
    case Backend::grid: return "grid";
    case Backend::monte_carlo: return "monte_carlo";
    case Backend::closed_form: return "closed_form";
  }
  return "?";
}

struct EngineOptions {
  /// Largest tensor grid evaluated exactly; beyond it Monte Carlo is used.
  std::size_t grid_limit = 1'000'000;
  std::size_t mc_samples = std::size_t{1} << 14;
  std::uint64_t seed = 0;
  /// Maximum number of subsets |u| <= m a projection may hold.
  std::size_t term_cap = 200'000;
  unsigned threads = 0;
  /// Monte Carlo standard errors above this raise a warning (0 disables).
  double mc_tolerance = 0.0;
  /// Nodes per axis; 0 uses each marginal's own quadrature order.
  std::size_t quadrature_order = 0;
};

/// A value with its provenance.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  Backend backend = Backend::grid;
  bool warning = false;
};

namespace detail {

inline std::uint64_t subset_key(const SubsetIndex& u) {
  std::uint64_t h = 0x5eed0f5b5e7ULL + u.size();
  for (auto i : u) h = splitmix64(h ^ (i + 1));
  return h;
}

inline constexpr std::uint64_t kCrnTag = 0xC0FFEEULL;
inline constexpr std::uint64_t kResidualTag = 0xBEEFULL;

// Row r of the shared common-random-number sample matrix.
inline void crn_row(const ProductMeasure& pm, std::uint64_t seed, std::size_t r, std::span<double> out) {
  KeyedStream s(hash_keys(seed, {kCrnTag, r}));
  for (std::size_t j = 0; j < pm.dims(); ++j) out[j] = pm[j].sample(s);
}

}  // namespace detail

/// f evaluated at every grid point, row-major.
inline std::vector<double> evaluate_on_grid(const TargetFunction& f, const GridSpec& grid, unsigned threads = 0) {
  if (f.arity != grid.dims()) throw InvalidArgument("evaluate_on_grid: arity does not match grid");
  const std::size_t total = grid.total_points();
  std::vector<std::size_t> shape;
  for (const auto& a : grid.axes()) shape.push_back(a.size());
  const auto strides = row_major_strides(shape);
  std::vector<double> values(total);
  constexpr std::size_t chunk = 4096;
  const std::size_t chunks = (total + chunk - 1) / chunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    std::vector<double> x(grid.dims());
    for (std::size_t p = c * chunk; p < std::min(total, (c + 1) * chunk); ++p) {
      std::size_t rem = p;
      for (std::size_t i = 0; i < grid.dims(); ++i) {
        std::size_t k = rem / strides[i];
        rem %= strides[i];
        x[i] = grid.axis(i).nodes[k];
      }
      values[p] = f(x);
    }
  });
  return values;
}

/// Joint probability weight of every grid point, row-major.
inline std::vector<double> grid_weights(const GridSpec& grid) {
  std::vector<double> w{1.0};
  for (const auto& a : grid.axes()) {
    std::vector<double> next;
    next.reserve(w.size() * a.size());
    for (double x : w)
      for (double y : a.weights) next.push_back(x * y);
    w = std::move(next);
  }
  return w;
}

/// E(f | x_v) tabulated on the nodes of v's axes, given f on the full grid.
inline std::vector<double> marginal_tensor(std::span<const double> values, const GridSpec& grid, const SubsetIndex& v) {
  const std::size_t n = grid.dims();
  std::vector<std::size_t> shape(n);
  for (std::size_t i = 0; i < n; ++i) shape[i] = grid.axis(i).size();
  std::vector<std::size_t> vshape;
  for (auto i : v) vshape.push_back(shape[i]);
  const auto vstrides = row_major_strides(vshape);
  std::size_t vsize = 1;
  for (auto s : vshape) vsize *= s;
  std::vector<double> out(vsize, 0.0);

  // accumulate w(complement) * f into the v-index of each point
  std::vector<std::size_t> idx(n, 0);
  std::size_t p = 0;
  do {
    double w = 1.0;
    std::size_t t = 0;
    for (std::size_t i = 0, k = 0; i < n; ++i) {
      if (k < v.size() && v[k] == i) {
        t += vstrides[k] * idx[i];
        ++k;
      } else {
        w *= grid.axis(i).weights[idx[i]];
      }
    }
    out[t] += w * values[p];
    ++p;
  } while (next_multi_index(idx, shape));
  return out;
}

/// Component f_u of the decomposition tabulated on u's quadrature nodes.
struct GridTerm {
  SubsetIndex subset;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

/// Symbolic component prod_{i in u} (g_i(x_i) - c_i) * scale.
struct ProductTerm {
  SubsetIndex subset;
  std::vector<Factor> factors;
  std::vector<double> centers;
  double scale = 1.0;

  double evaluate(std::span<const double> x) const {
    double p = scale;
    for (std::size_t k = 0; k < subset.size(); ++k) p *= factors[k](x[subset[k]]) - centers[k];
    return p;
  }
};

using TermRepresentation = std::variant<GridTerm, ProductTerm>;

/// Truncated decomposition P_m f = E(f) + sum_{0<|u|<=m} f_u.
struct AnovaDecomposition {
  std::optional<ProductMeasure> measure;
  GridSpec grid;
  std::size_t order = 0;
  double mean = 0.0;
  std::map<SubsetIndex, TermRepresentation> terms;
  /// Includes the empty subset with variance 0.
  std::map<SubsetIndex, double> term_variance;
  /// var(f) when the backend knows it.
  std::optional<double> function_variance;
  Backend backend = Backend::grid;
  std::size_t mc_samples = 0;
  std::uint64_t seed = 0;

  std::size_t dims() const { return grid.dims(); }

  double total_term_variance() const {
    double s = 0.0;
    for (const auto& [u, v] : term_variance) s += v;
    return s;
  }

  /// f_u(x) at an arbitrary point (grid terms are interpolated per axis).
  double term_value(const SubsetIndex& u, std::span<const double> x) const {
    const auto& t = terms.at(u);
    if (const auto* pt = std::get_if<ProductTerm>(&t)) return pt->evaluate(x);
    const auto& gt = std::get<GridTerm>(t);
    ensure_interpolators();
    std::vector<std::vector<double>> coeffs;
    for (auto i : gt.subset) coeffs.push_back((*interp_)[i].coefficients(x[i]));
    return contract(gt, coeffs);
  }

  /// (P_m f)(x).
  double evaluate(std::span<const double> x) const {
    if (x.size() != dims()) throw InvalidArgument("AnovaDecomposition::evaluate: wrong point dimension");
    ensure_interpolators();
    std::vector<std::optional<std::vector<double>>> cache(dims());
    double s = mean;
    for (const auto& [u, t] : terms) {
      if (const auto* pt = std::get_if<ProductTerm>(&t)) {
        s += pt->evaluate(x);
        continue;
      }
      const auto& gt = std::get<GridTerm>(t);
      std::vector<std::vector<double>> coeffs;
      for (auto i : gt.subset) {
        if (!cache[i]) cache[i] = (*interp_)[i].coefficients(x[i]);
        coeffs.push_back(*cache[i]);
      }
      s += contract(gt, coeffs);
    }
    return s;
  }

  /// (P_m f) at a grid node given by per-axis node indices; exact for grid terms.
  double evaluate_at_node(std::span<const std::size_t> idx) const {
    double s = mean;
    std::vector<double> x;
    for (const auto& [u, t] : terms) {
      if (const auto* gt = std::get_if<GridTerm>(&t)) {
        std::size_t flat = 0;
        for (std::size_t k = 0; k < u.size(); ++k) flat = flat * gt->shape[k] + idx[u[k]];
        s += gt->values[flat];
      } else {
        if (x.empty()) {
          x.resize(dims());
          for (std::size_t i = 0; i < dims(); ++i) x[i] = grid.axis(i).nodes[idx[i]];
        }
        s += std::get<ProductTerm>(t).evaluate(x);
      }
    }
    return s;
  }

 private:
  static double contract(const GridTerm& gt, const std::vector<std::vector<double>>& coeffs) {
    if (gt.subset.empty()) return gt.values.at(0);
    double s = 0.0;
    std::vector<std::size_t> idx(gt.shape.size(), 0);
    std::size_t p = 0;
    do {
      double w = 1.0;
      for (std::size_t k = 0; k < idx.size(); ++k) w *= coeffs[k][idx[k]];
      s += w * gt.values[p++];
    } while (next_multi_index(idx, gt.shape));
    return s;
  }

  void ensure_interpolators() const {
    if (interp_) return;
    auto v = std::make_shared<std::vector<BarycentricAxis>>();
    for (const auto& a : grid.axes()) v->emplace_back(a.nodes);
    interp_ = std::move(v);
  }

  mutable std::shared_ptr<const std::vector<BarycentricAxis>> interp_;
};

/// E(f | x_u) at the anchor x_u (values listed in u's order).
inline Estimate cond_expectation(const TargetFunction& f, const ProductMeasure& pm, const SubsetIndex& u,
                                 std::span<const double> x_u, const EngineOptions& opt = {},
                                 std::uint64_t anchor_index = 0) {
  const std::size_t n = pm.dims();
  if (f.arity != n) throw InvalidArgument("cond_expectation: arity does not match measure");
  u.check_within(n);
  if (x_u.size() != u.size()) throw InvalidArgument("cond_expectation: anchor has wrong length");
  const SubsetIndex comp = u.complement(n);
  std::vector<double> x(n, 0.0);
  for (std::size_t k = 0; k < u.size(); ++k) x[u[k]] = x_u[k];

  std::vector<AxisRule> rules;
  std::size_t comp_points = 1;
  for (auto j : comp) {
    rules.push_back(pm[j].rule(opt.quadrature_order));
    comp_points = (comp_points > opt.grid_limit / rules.back().size()) ? opt.grid_limit + 1
                                                                        : comp_points * rules.back().size();
  }
  if (comp_points <= opt.grid_limit) {
    std::vector<std::size_t> shape;
    for (const auto& r : rules) shape.push_back(r.size());
    std::vector<std::size_t> idx(comp.size(), 0);
    double s = 0.0;
    do {
      double w = 1.0;
      for (std::size_t k = 0; k < comp.size(); ++k) {
        x[comp[k]] = rules[k].nodes[idx[k]];
        w *= rules[k].weights[idx[k]];
      }
      s += w * f(x);
    } while (next_multi_index(idx, shape));
    return Estimate{s, 0.0, Backend::grid, false};
  }

  KeyedStream stream(hash_keys(opt.seed, {detail::subset_key(u), anchor_index}));
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t r = 0; r < opt.mc_samples; ++r) {
    for (auto j : comp) x[j] = pm[j].sample(stream);
    double y = f(x);
    double d = y - mean;
    mean += d / static_cast<double>(r + 1);
    m2 += d * (y - mean);
  }
  double se = opt.mc_samples > 1 ? std::sqrt(m2 / static_cast<double>(opt.mc_samples - 1) / static_cast<double>(opt.mc_samples)) : INFINITY;
  return Estimate{mean, se, Backend::monte_carlo, opt.mc_tolerance > 0.0 && se > opt.mc_tolerance};
}

/// The function x -> E(f | x_u), as a TargetFunction on all n coordinates.
inline TargetFunction conditional_function(const TargetFunction& f, const ProductMeasure& pm, const SubsetIndex& u,
                                           const EngineOptions& opt = {}) {
  u.check_within(pm.dims());
  TargetFunction g;
  g.arity = f.arity;
  g.evaluate = [f, pm, u, opt](std::span<const double> x) {
    std::vector<double> xu;
    for (auto i : u) xu.push_back(x[i]);
    return cond_expectation(f, pm, u, xu, opt).value;
  };
  return g;
}

/// (D_i f)(x) = f(x) - E(f | all coordinates except x_i), with the inner
/// expectation taken by the marginal's quadrature rule.
inline TargetFunction d_operator(const TargetFunction& f, const ProductMeasure& pm, std::size_t i,
                                 const EngineOptions& opt = {}) {
  if (i >= pm.dims() || f.arity != pm.dims()) throw InvalidArgument("d_operator: coordinate out of range");
  auto rule = std::make_shared<const AxisRule>(pm[i].rule(opt.quadrature_order));
  TargetFunction d;
  d.arity = f.arity;
  d.evaluate = [f, rule, i](std::span<const double> x) {
    std::vector<double> y(x.begin(), x.end());
    double avg = 0.0;
    for (std::size_t k = 0; k < rule->size(); ++k) {
      y[i] = rule->nodes[k];
      avg += rule->weights[k] * f(y);
    }
    return f(x) - avg;
  };
  if (f.mixed_derivative) {
    d.mixed_derivative = [f, rule, i](std::span<const double> x, const SubsetIndex& u) {
      double direct = f.mixed_derivative(x, u);
      if (u.contains(i)) return direct;
      std::vector<double> y(x.begin(), x.end());
      double avg = 0.0;
      for (std::size_t k = 0; k < rule->size(); ++k) {
        y[i] = rule->nodes[k];
        avg += rule->weights[k] * f.mixed_derivative(y, u);
      }
      return direct - avg;
    };
  }
  return d;
}

namespace detail {

inline constexpr std::size_t kMaxInclusionExclusion = 20;

inline std::vector<std::size_t> subset_shape(const GridSpec& grid, const SubsetIndex& u) {
  std::vector<std::size_t> s;
  for (auto i : u) s.push_back(grid.axis(i).size());
  return s;
}

// f_u = sum_{v subset of u} (-1)^{|u|-|v|} E(f | x_v), given E(f | x_v) on v's nodes.
template <class MarginalLookup>
GridTerm inclusion_exclusion(const GridSpec& grid, const SubsetIndex& u, MarginalLookup&& marginal_of) {
  if (u.size() > kMaxInclusionExclusion)
    throw CapacityError("anova_term: |u| = " + std::to_string(u.size()) + " exceeds the inclusion-exclusion limit of " +
                        std::to_string(kMaxInclusionExclusion));
  GridTerm t;
  t.subset = u;
  t.shape = subset_shape(grid, u);
  std::size_t size = 1;
  for (auto s : t.shape) size *= s;
  t.values.assign(size, 0.0);
  const std::uint64_t full = (std::uint64_t{1} << u.size()) - 1;
  for (std::uint64_t mask = 0; mask <= full; ++mask) {
    const SubsetIndex v = u.select(mask);
    const std::vector<double>& mv = marginal_of(v);
    const double sign = ((u.size() - v.size()) % 2 == 0) ? 1.0 : -1.0;
    const auto vshape = subset_shape(grid, v);
    const auto vstrides = row_major_strides(vshape);
    std::vector<std::size_t> idx(u.size(), 0);
    std::size_t p = 0;
    do {
      std::size_t flat = 0;
      for (std::size_t k = 0, kv = 0; k < u.size(); ++k)
        if (mask >> k & 1u) flat += vstrides[kv++] * idx[k];
      t.values[p++] += sign * mv[flat];
    } while (next_multi_index(idx, t.shape));
  }
  return t;
}

inline double term_variance_on_grid(const GridSpec& grid, const GridTerm& t) {
  if (t.subset.empty()) return 0.0;
  std::vector<std::size_t> idx(t.shape.size(), 0);
  double s = 0.0;
  std::size_t p = 0;
  do {
    double w = 1.0;
    for (std::size_t k = 0; k < idx.size(); ++k) w *= grid.axis(t.subset[k]).weights[idx[k]];
    s += w * t.values[p] * t.values[p];
    ++p;
  } while (next_multi_index(idx, t.shape));
  return s;
}

}  // namespace detail

/// The ANOVA component f_u on u's quadrature nodes, by inclusion-exclusion
/// over conditional expectations.
inline GridTerm anova_term(const TargetFunction& f, const ProductMeasure& pm, const SubsetIndex& u,
                           const EngineOptions& opt = {}) {
  u.check_within(pm.dims());
  if (u.size() > detail::kMaxInclusionExclusion)
    throw CapacityError("anova_term: |u| = " + std::to_string(u.size()) + " exceeds the inclusion-exclusion limit of " +
                        std::to_string(detail::kMaxInclusionExclusion));
  const GridSpec grid = pm.grid(opt.quadrature_order);
  std::map<SubsetIndex, std::vector<double>> cache;
  auto lookup = [&](const SubsetIndex& v) -> const std::vector<double>& {
    auto it = cache.find(v);
    if (it != cache.end()) return it->second;
    const auto shape = detail::subset_shape(grid, v);
    std::vector<double> mv;
    std::vector<std::size_t> idx(v.size(), 0);
    std::vector<double> xv(v.size());
    std::uint64_t anchor = 0;
    do {
      for (std::size_t k = 0; k < v.size(); ++k) xv[k] = grid.axis(v[k]).nodes[idx[k]];
      mv.push_back(cond_expectation(f, pm, v, xv, opt, anchor++).value);
    } while (next_multi_index(idx, shape));
    return cache.emplace(v, std::move(mv)).first->second;
  };
  return detail::inclusion_exclusion(grid, u, lookup);
}

/// P_m f: every component with |u| <= m. Exact on the tensor grid when it
/// fits `grid_limit`, otherwise conditional expectations share one Monte
/// Carlo sample of all coordinates (common random numbers across subsets).
inline AnovaDecomposition project(const TargetFunction& f, const ProductMeasure& pm, std::size_t m,
                                  const EngineOptions& opt = {}) {
  const std::size_t n = pm.dims();
  if (f.arity != n) throw InvalidArgument("project: arity does not match measure");
  if (m > n) throw InvalidArgument("project: order exceeds dimension");
  const std::uint64_t count = count_subsets(n, m);
  if (count > opt.term_cap)
    throw CapacityError("project: " + std::to_string(count) + " subsets exceed the cap of " +
                        std::to_string(opt.term_cap));
  const auto subsets = enumerate_subsets(n, m);

  AnovaDecomposition dec;
  dec.measure = pm;
  dec.grid = pm.grid(opt.quadrature_order);
  dec.order = m;
  dec.seed = opt.seed;
  const GridSpec& grid = dec.grid;

  std::vector<std::vector<double>> marginals(subsets.size());
  if (grid.total_points() <= opt.grid_limit) {
    dec.backend = Backend::grid;
    const auto values = evaluate_on_grid(f, grid, opt.threads);
    const auto w = grid_weights(grid);
    double mean = 0.0;
    for (std::size_t p = 0; p < values.size(); ++p) mean += w[p] * values[p];
    double var = 0.0;
    for (std::size_t p = 0; p < values.size(); ++p) var += w[p] * (values[p] - mean) * (values[p] - mean);
    dec.function_variance = var;
    parallel_for(subsets.size(), opt.threads,
                 [&](std::size_t s) { marginals[s] = marginal_tensor(values, grid, subsets[s]); });
  } else {
    dec.backend = Backend::monte_carlo;
    dec.mc_samples = opt.mc_samples;
    const std::size_t S = opt.mc_samples;
    if (S < 2) throw InvalidArgument("project: Monte Carlo backend needs at least two samples");
    std::vector<double> Z(S * n);
    for (std::size_t r = 0; r < S; ++r) detail::crn_row(pm, opt.seed, r, std::span<double>(Z).subspan(r * n, n));
    parallel_for(subsets.size(), opt.threads, [&](std::size_t s) {
      const SubsetIndex& v = subsets[s];
      const auto shape = detail::subset_shape(grid, v);
      std::vector<std::size_t> idx(v.size(), 0);
      std::vector<double> x(n);
      std::vector<double> mv;
      do {
        double acc = 0.0;
        for (std::size_t r = 0; r < S; ++r) {
          std::copy_n(Z.begin() + static_cast<long>(r * n), n, x.begin());
          for (std::size_t k = 0; k < v.size(); ++k) x[v[k]] = grid.axis(v[k]).nodes[idx[k]];
          acc += f(x);
        }
        mv.push_back(acc / static_cast<double>(S));
      } while (next_multi_index(idx, shape));
      marginals[s] = std::move(mv);
    });
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t r = 0; r < S; ++r) {
      double y = f(std::span<const double>(Z).subspan(r * n, n));
      double d = y - mean;
      mean += d / static_cast<double>(r + 1);
      m2 += d * (y - mean);
    }
    dec.function_variance = m2 / static_cast<double>(S - 1);
  }

  std::map<SubsetIndex, std::size_t> position;
  for (std::size_t s = 0; s < subsets.size(); ++s) position.emplace(subsets[s], s);
  auto lookup = [&](const SubsetIndex& v) -> const std::vector<double>& { return marginals[position.at(v)]; };

  std::vector<GridTerm> terms(subsets.size());
  std::vector<double> variances(subsets.size(), 0.0);
  parallel_for(subsets.size(), opt.threads, [&](std::size_t s) {
    if (subsets[s].empty()) return;
    terms[s] = detail::inclusion_exclusion(grid, subsets[s], lookup);
    variances[s] = detail::term_variance_on_grid(grid, terms[s]);
  });
  dec.mean = marginals[0].at(0);
  dec.term_variance.emplace(SubsetIndex{}, 0.0);
  for (std::size_t s = 1; s < subsets.size(); ++s) {
    dec.term_variance.emplace(subsets[s], variances[s]);
    dec.terms.emplace(subsets[s], std::move(terms[s]));
  }
  return dec;
}

/// Decomposition of a discrete function given directly on a grid with
/// product weights (no measure attached).
inline AnovaDecomposition project_grid_values(std::span<const double> values, const GridSpec& grid, std::size_t m,
                                              unsigned threads = 0, std::size_t term_cap = 200'000) {
  const std::size_t n = grid.dims();
  if (values.size() != grid.total_points()) throw InvalidArgument("project_grid_values: size mismatch");
  if (m > n) throw InvalidArgument("project_grid_values: order exceeds dimension");
  const std::uint64_t count = count_subsets(n, m);
  if (count > term_cap)
    throw CapacityError("project: " + std::to_string(count) + " subsets exceed the cap of " + std::to_string(term_cap));
  const auto subsets = enumerate_subsets(n, m);
  AnovaDecomposition dec;
  dec.grid = grid;
  dec.order = m;
  dec.backend = Backend::grid;
  const auto w = grid_weights(grid);
  double mean = 0.0;
  for (std::size_t p = 0; p < values.size(); ++p) mean += w[p] * values[p];
  double var = 0.0;
  for (std::size_t p = 0; p < values.size(); ++p) var += w[p] * (values[p] - mean) * (values[p] - mean);
  dec.function_variance = var;
  std::vector<std::vector<double>> marginals(subsets.size());
  parallel_for(subsets.size(), threads, [&](std::size_t s) { marginals[s] = marginal_tensor(values, grid, subsets[s]); });
  std::map<SubsetIndex, std::size_t> position;
  for (std::size_t s = 0; s < subsets.size(); ++s) position.emplace(subsets[s], s);
  auto lookup = [&](const SubsetIndex& v) -> const std::vector<double>& { return marginals[position.at(v)]; };
  dec.mean = marginals[0].at(0);
  dec.term_variance.emplace(SubsetIndex{}, 0.0);
  for (std::size_t s = 1; s < subsets.size(); ++s) {
    GridTerm t = detail::inclusion_exclusion(grid, subsets[s], lookup);
    dec.term_variance.emplace(subsets[s], detail::term_variance_on_grid(grid, t));
    dec.terms.emplace(subsets[s], std::move(t));
  }
  return dec;
}

/// (P_m f) at every grid point, row-major.
inline std::vector<double> projection_on_grid(const AnovaDecomposition& dec) {
  std::vector<std::size_t> shape;
  for (const auto& a : dec.grid.axes()) shape.push_back(a.size());
  std::vector<double> out;
  out.reserve(dec.grid.total_points());
  std::vector<std::size_t> idx(shape.size(), 0);
  do {
    out.push_back(dec.evaluate_at_node(idx));
  } while (next_multi_index(idx, shape));
  return out;
}

struct ResidualEstimate {
  /// E((f - P_m f)^2), clamped at zero.
  double mse = 0.0;
  double std_error = 0.0;
  Backend backend = Backend::grid;
  /// var(f) - sum of term variances, when available.
  std::optional<double> parseval_route;
  /// Direct quadrature or sampling of the squared residual.
  std::optional<double> direct_route;
};

namespace detail {

inline double clamp_residual(double r) {
  if (r < -1e-10) throw Error("residual_mse: negative residual " + std::to_string(r) + " from cancellation");
  return std::max(0.0, r);
}

}  // namespace detail

/// E((f - P_m f)^2) for a decomposition built from f.
inline ResidualEstimate residual_mse(const AnovaDecomposition& dec, const TargetFunction& f,
                                     const EngineOptions& opt = {}) {
  ResidualEstimate out;
  out.backend = dec.backend;
  if (dec.backend == Backend::grid) {
    const auto values = evaluate_on_grid(f, dec.grid, opt.threads);
    const auto fitted = projection_on_grid(dec);
    const auto w = grid_weights(dec.grid);
    double direct = 0.0;
    for (std::size_t p = 0; p < values.size(); ++p) direct += w[p] * (values[p] - fitted[p]) * (values[p] - fitted[p]);
    out.direct_route = direct;
    double total = dec.total_term_variance();
    double var = dec.function_variance.value_or(0.0);
    out.parseval_route = var - total;
    const double tol = 1e-8 * std::max(1.0, var);
    if (std::abs(*out.parseval_route - direct) > tol)
      throw Error("residual_mse: Parseval route " + std::to_string(*out.parseval_route) + " and direct route " +
                  std::to_string(direct) + " disagree");
    out.mse = detail::clamp_residual(*out.parseval_route);
    return out;
  }
  if (dec.backend == Backend::closed_form) {
    out.parseval_route = dec.function_variance.value_or(0.0) - dec.total_term_variance();
    out.mse = detail::clamp_residual(*out.parseval_route);
    return out;
  }
  if (!dec.measure) throw InvalidArgument("residual_mse: Monte Carlo residual needs the measure");
  const ProductMeasure& pm = *dec.measure;
  const std::size_t n = pm.dims();
  const std::size_t S = std::max<std::size_t>(opt.mc_samples, 2);
  std::vector<double> x(n);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t r = 0; r < S; ++r) {
    KeyedStream s(hash_keys(opt.seed, {detail::kResidualTag, r}));
    for (std::size_t j = 0; j < n; ++j) x[j] = pm[j].sample(s);
    double e = f(x) - dec.evaluate(x);
    double y = e * e;
    double d = y - mean;
    mean += d / static_cast<double>(r + 1);
    m2 += d * (y - mean);
  }
  out.direct_route = mean;
  out.std_error = std::sqrt(m2 / static_cast<double>(S - 1) / static_cast<double>(S));
  if (dec.function_variance) out.parseval_route = *dec.function_variance - dec.total_term_variance();
  out.mse = std::max(0.0, mean);
  return out;
}

}  // namespace anova
