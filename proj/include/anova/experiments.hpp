#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "anova/anova_core.hpp"
#include "anova/builtins.hpp"
#include "anova/error.hpp"
#include "anova/marginals.hpp"
#include "anova/oracle.hpp"
#include "anova/parallel.hpp"
#include "anova/product_form.hpp"
#include "anova/rng.hpp"
#include "anova/smoothness.hpp"

namespace anova {

enum class ExperimentName { example1, example2, counterexample_product, counterexample_bumps, concentration_nn, concentration_dim };

inline const char* to_string(ExperimentName e) {
  switch (e) {
    case ExperimentName::example1: return "example1";
    case ExperimentName::example2: return "example2";
    case ExperimentName::counterexample_product: return "counterexample_product";
    case ExperimentName::counterexample_bumps: return "counterexample_bumps";
    case ExperimentName::concentration_nn: return "concentration_nn";
    case ExperimentName::concentration_dim: return "concentration_dim";
  }
  return "?";
}

inline ExperimentName parse_experiment_name(const std::string& s) {
  for (auto e : {ExperimentName::example1, ExperimentName::example2, ExperimentName::counterexample_product,
                 ExperimentName::counterexample_bumps, ExperimentName::concentration_nn,
                 ExperimentName::concentration_dim})
    if (s == to_string(e)) return e;
  throw InvalidArgument("unknown experiment '" + s + "'");
}

struct ExperimentConfig {
  ExperimentName name = ExperimentName::example1;
  std::vector<std::size_t> dims;
  /// Row labels: m means the remainder of the order-(m-1) approximation.
  std::vector<std::size_t> orders = {1, 2, 3, 4};
  std::uint64_t seed = 0;
  /// Monte Carlo points for the sanity column (0 disables it), or the point
  /// count N for the nearest-neighbor demo.
  std::size_t samples = 100'000;
  std::string output;
  unsigned threads = 0;

  void validate() const {
    if (dims.empty()) throw InvalidArgument("experiment: dims must be nonempty");
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (dims[i] == 0) throw InvalidArgument("experiment: dimensions must be positive");
      if (i > 0 && dims[i] <= dims[i - 1]) throw InvalidArgument("experiment: dims must be strictly ascending");
    }
    if (name == ExperimentName::example1 || name == ExperimentName::example2) {
      if (orders.empty()) throw InvalidArgument("experiment: orders must be nonempty");
      for (auto m : orders)
        if (m < 1 || m > 4) throw InvalidArgument("experiment: orders must lie in {1,2,3,4}");
    }
  }
};

struct ScalingRow {
  std::size_t n = 0;
  std::size_t m = 0;
  double rms = 0.0;
  /// rms * n^{m/2}.
  double scaled = 0.0;
  /// sqrt of the smoothness bound; absent where no bound applies.
  std::optional<double> bound;
  std::optional<double> mc_rms;
  std::optional<double> mc_se;
};

inline constexpr std::uint64_t kExample1Tag = 0xE1;
inline constexpr std::uint64_t kExample2Tag = 0xE2;
inline constexpr std::uint64_t kNearestTag = 0x4E4E;

namespace detail {

// Monte Carlo rms of f - P_{m-1} f for each requested m, sampling all of
// pfa's coordinates from its measure.
inline void mc_remainders(const ProductFormAnova& pfa, std::size_t samples, std::uint64_t seed, std::uint64_t tag,
                          std::size_t n_label, std::vector<ScalingRow>& rows) {
  if (samples < 2 || rows.empty()) return;
  std::size_t top = 0;
  for (const auto& r : rows) top = std::max(top, r.m);
  const std::size_t dims = pfa.dims();
  std::vector<double> x(dims);
  std::vector<double> mean(rows.size(), 0.0);
  std::vector<double> m2(rows.size(), 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    KeyedStream stream(hash_keys(seed, {tag, n_label, s}));
    for (std::size_t i = 0; i < dims; ++i) x[i] = pfa.measure()[i].sample(stream);
    const double fx = pfa.evaluate(x);
    const auto proj = pfa.projections_at(x, top);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const std::size_t below = std::min(rows[k].m - 1, proj.size() - 1);
      const double e = rows[k].m - 1 >= dims ? 0.0 : fx - proj[below];
      const double y = e * e;
      const double d = y - mean[k];
      mean[k] += d / static_cast<double>(s + 1);
      m2[k] += d * (y - mean[k]);
    }
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double ms = std::max(0.0, mean[k]);
    const double se_ms = std::sqrt(m2[k] / static_cast<double>(samples - 1) / static_cast<double>(samples));
    rows[k].mc_rms = std::sqrt(ms);
    // delta method for the square root
    rows[k].mc_se = ms > 0.0 ? se_ms / (2.0 * std::sqrt(ms)) : 0.0;
  }
}

template <class CellFn>
std::vector<ScalingRow> sweep(const ExperimentConfig& cfg, CellFn&& cell) {
  std::vector<std::vector<ScalingRow>> per_n(cfg.dims.size());
  parallel_for(cfg.dims.size(), cfg.threads, [&](std::size_t k) { per_n[k] = cell(cfg.dims[k]); });
  std::vector<ScalingRow> out;
  for (auto& rows : per_n) out.insert(out.end(), rows.begin(), rows.end());
  return out;
}

}  // namespace detail

/// f = exp(-|x|^2/n) on uniform(-1,1)^n: rms of f - P_{m-1} f from the closed
/// form, its scaling by n^{m/2}, and the square root of the a priori bound.
inline std::vector<ScalingRow> run_example1(const ExperimentConfig& cfg) {
  cfg.validate();
  return detail::sweep(cfg, [&](std::size_t n) {
    const auto pm = ProductMeasure::homogeneous(Marginal::uniform(-1.0, 1.0, 64), n);
    const ProductFormAnova pfa(*builtin_gauss(n).product_form, pm, 64);
    std::vector<ScalingRow> rows;
    for (auto m : cfg.orders) {
      ScalingRow r;
      r.n = n;
      r.m = m;
      r.rms = std::sqrt(std::max(0.0, pfa.residual_after(m - 1)));
      r.scaled = r.rms * std::pow(static_cast<double>(n), 0.5 * static_cast<double>(m));
      r.bound = std::sqrt(example1_bound(n, m));
      rows.push_back(r);
    }
    detail::mc_remainders(pfa, cfg.samples, cfg.seed, kExample1Tag, n, rows);
    return rows;
  });
}

/// Per-coordinate variance of sin(X) for X ~ normal(0, v): (1 - e^{-2v}) / 2.
inline double example2_sigma_sq(std::size_t n) {
  return 0.5 * -std::expm1(-2.0 / static_cast<double>(n));
}

/// (1+sin x_1)(1+sin x_2)(1+sin x_3) with x_i ~ normal(0, 1/n); only the
/// first min(n,3) coordinates matter.
inline std::vector<ScalingRow> run_example2(const ExperimentConfig& cfg) {
  cfg.validate();
  return detail::sweep(cfg, [&](std::size_t n) {
    const std::size_t active = std::min<std::size_t>(n, 3);
    const double s2 = example2_sigma_sq(n);
    const auto pm = ProductMeasure::homogeneous(Marginal::normal(0.0, 1.0 / static_cast<double>(n)), active);
    const ProductFormAnova pfa(*builtin_sinprod(active).product_form, pm, std::vector<double>(active, 1.0),
                               std::vector<double>(active, s2));
    std::vector<ScalingRow> rows;
    for (auto m : cfg.orders) {
      ScalingRow r;
      r.n = n;
      r.m = m;
      r.rms = std::sqrt(std::max(0.0, pfa.residual_after(m - 1)));
      r.scaled = r.rms * std::pow(static_cast<double>(n), 0.5 * static_cast<double>(m));
      rows.push_back(r);
    }
    detail::mc_remainders(pfa, cfg.samples, cfg.seed, kExample2Tag, n, rows);
    return rows;
  });
}

/// Least-squares slope of log y against log x over the points with y > 0.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("loglog_slope: size mismatch");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++k;
  }
  if (k < 2) throw InvalidArgument("loglog_slope: need two positive points");
  const double kk = static_cast<double>(k);
  return (kk * sxy - sx * sy) / (kk * sxx - sx * sx);
}

struct CounterexampleReport {
  std::string function;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t nodes_per_axis = 0;
  double variance = 0.0;
  /// E((f - P_m f)^2) of the ANOVA projection.
  double anova_mse = 0.0;
  /// Best fit from L_{2,m} by least squares.
  double oracle_mse = 0.0;
  /// oracle_mse / variance; 1 means the best fit is the constant E(f).
  double ratio = 0.0;
  /// max |P_m f - E(f)| on the grid.
  double max_projection = 0.0;
};

namespace detail {

inline CounterexampleReport counterexample_on_grid(const std::string& name, const TargetFunction& f,
                                                   const ProductMeasure& pm, std::size_t m, std::size_t nodes,
                                                   unsigned threads) {
  CounterexampleReport rep;
  rep.function = name;
  rep.n = pm.dims();
  rep.m = m;
  rep.nodes_per_axis = nodes;
  EngineOptions opt;
  opt.quadrature_order = nodes;
  opt.threads = threads;
  const auto dec = project(f, pm, m, opt);
  if (dec.backend != Backend::grid) throw CapacityError("counterexample: grid too large for the exact backend");
  const auto values = evaluate_on_grid(f, dec.grid, threads);
  const auto fitted = projection_on_grid(dec);
  const DiscreteModel model(dec.grid);
  const auto& w = model.joint();
  double mean = 0.0;
  for (std::size_t p = 0; p < values.size(); ++p) mean += w[p] * values[p];
  for (std::size_t p = 0; p < values.size(); ++p) {
    rep.variance += w[p] * (values[p] - mean) * (values[p] - mean);
    rep.anova_mse += w[p] * (values[p] - fitted[p]) * (values[p] - fitted[p]);
    rep.max_projection = std::max(rep.max_projection, std::abs(fitted[p] - mean));
  }
  rep.oracle_mse = ls_project(values, model, m).mse;
  rep.ratio = rep.variance > 0.0 ? rep.oracle_mse / rep.variance : 0.0;
  return rep;
}

}  // namespace detail

/// x_1...x_n on uniform(-1,1)^n: P_{n-1} f vanishes and the residual is
/// var(f) = 3^{-n}.
inline CounterexampleReport counterexample_product(std::size_t n, std::size_t nodes = 0, unsigned threads = 0) {
  if (n < 1 || n > 4) throw InvalidArgument("counterexample_product: n must be in 1..4");
  if (nodes == 0) nodes = n <= 3 ? 9 : 5;
  const auto pm = ProductMeasure::homogeneous(Marginal::uniform(-1.0, 1.0), n);
  return detail::counterexample_on_grid("product", builtin_product(n), pm, n - 1, nodes, threads);
}

/// Parity-signed bumps at the vertices of [0,1]^n under the uniform measure.
inline CounterexampleReport counterexample_bumps(std::size_t n, std::size_t nodes = 0, unsigned threads = 0) {
  if (n < 2 || n > 3) throw InvalidArgument("counterexample_bumps: n must be 2 or 3");
  if (nodes == 0) nodes = n == 2 ? 64 : 16;
  const auto pm = ProductMeasure::homogeneous(Marginal::uniform(0.0, 1.0), n);
  return detail::counterexample_on_grid("bumps", builtin_bumps(n), pm, n - 1, nodes, threads);
}

inline std::vector<CounterexampleReport> run_counterexamples(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<CounterexampleReport> out;
  for (auto n : cfg.dims) {
    if (cfg.name == ExperimentName::counterexample_bumps)
      out.push_back(counterexample_bumps(n, 0, cfg.threads));
    else
      out.push_back(counterexample_product(n, 0, cfg.threads));
  }
  return out;
}

/// Smallest n >= 1 with c1 exp(-c2 eps^2 n) < eps.
inline std::size_t concentration_min_dimension(double epsilon, double c1, double c2) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("concentration_min_dimension: epsilon must be in (0,1)");
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw InvalidArgument("concentration_min_dimension: constants must be positive");
  const double t = std::log(c1 / epsilon) / (c2 * epsilon * epsilon);
  if (t < 0.0) return 1;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(t)) + 1);
}

inline constexpr double kSphereC1 = 1.2533141373155001 / 2.0;  // sqrt(pi/8)
inline constexpr double kSphereC2 = 0.5;

/// Dimension figures quoted in the literature for the sphere constants.
inline std::optional<double> quoted_min_dimension(double epsilon) {
  if (epsilon == 0.2) return 41.0;
  if (epsilon == 0.1) return 270.0;
  if (epsilon == 0.05) return 5000.0;
  if (epsilon == 0.01) return 1e5;
  return std::nullopt;
}

struct NearestNeighborStats {
  std::size_t n = 0;
  std::size_t points = 0;
  std::size_t neighbors = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double relative_spread = 0.0;
};

/// Distances from a standard normal query to its k nearest among N standard
/// normal points, for each dimension in cfg.dims.
inline std::vector<NearestNeighborStats> concentration_nn_demo(const ExperimentConfig& cfg, std::size_t neighbors = 100) {
  cfg.validate();
  const std::size_t N = cfg.samples;
  if (N < neighbors + 1)
    throw InvalidArgument("concentration_nn_demo: need at least " + std::to_string(neighbors + 1) + " points");
  std::vector<NearestNeighborStats> out(cfg.dims.size());
  parallel_for(cfg.dims.size(), cfg.threads, [&](std::size_t k) {
    const std::size_t n = cfg.dims[k];
    const Marginal z = Marginal::normal(0.0, 1.0);
    KeyedStream qs(hash_keys(cfg.seed, {kNearestTag, n, 0}));
    std::vector<double> q(n);
    for (auto& v : q) v = z.sample(qs);
    std::vector<double> dist(N);
    KeyedStream ps(hash_keys(cfg.seed, {kNearestTag, n, 1}));
    for (std::size_t p = 0; p < N; ++p) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = z.sample(ps) - q[i];
        s += d * d;
      }
      dist[p] = std::sqrt(s);
    }
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(neighbors), dist.end());
    NearestNeighborStats st;
    st.n = n;
    st.points = N;
    st.neighbors = neighbors;
    for (std::size_t p = 0; p < neighbors; ++p) st.mean += dist[p];
    st.mean /= static_cast<double>(neighbors);
    for (std::size_t p = 0; p < neighbors; ++p) st.stddev += (dist[p] - st.mean) * (dist[p] - st.mean);
    st.stddev = std::sqrt(st.stddev / static_cast<double>(neighbors - 1));
    st.relative_spread = st.stddev / st.mean;
    out[k] = st;
  });
  return out;
}

}  // namespace anova
