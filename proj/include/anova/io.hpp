#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "anova/anova_core.hpp"
#include "anova/error.hpp"
#include "anova/experiments.hpp"
#include "anova/marginals.hpp"
#include "anova/target.hpp"

namespace anova {

using Json = nlohmann::ordered_json;

/// %.{digits}g formatting; 17 digits round-trips a double.
inline std::string format_number(double v, int digits = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string describe(const ProductMeasure& pm) {
  std::string s;
  for (std::size_t i = 0; i < pm.dims(); ++i) {
    if (i) s += ",";
    s += pm[i].describe();
  }
  return s;
}

inline Json decomposition_json(const AnovaDecomposition& dec, std::optional<ResidualEstimate> residual = std::nullopt) {
  Json j;
  j["measure"] = dec.measure ? describe(*dec.measure) : std::string("grid");
  j["order"] = dec.order;
  j["backend"] = to_string(dec.backend);
  j["mean"] = dec.mean;
  if (dec.function_variance) j["variance"] = *dec.function_variance;
  Json terms = Json::array();
  for (const auto& [u, v] : dec.term_variance) {
    if (u.empty()) continue;
    terms.push_back({{"subset", u.to_string()}, {"variance", v}});
  }
  j["terms"] = std::move(terms);
  if (residual) {
    j["residual_mse"] = residual->mse;
    if (residual->std_error > 0.0) j["residual_std_error"] = residual->std_error;
  }
  if (dec.backend == Backend::monte_carlo) {
    j["mc_samples"] = dec.mc_samples;
    j["seed"] = dec.seed;
  }
  return j;
}

/// One row per grid node: coordinates then (P_m f)(x).
inline void write_grid_csv(std::ostream& out, const AnovaDecomposition& dec) {
  const std::size_t n = dec.dims();
  for (std::size_t i = 0; i < n; ++i) out << "x_" << (i + 1) << ",";
  out << "value\n";
  const auto fitted = projection_on_grid(dec);
  std::vector<std::size_t> shape;
  for (const auto& a : dec.grid.axes()) shape.push_back(a.size());
  std::vector<std::size_t> idx(n, 0);
  std::size_t p = 0;
  do {
    for (std::size_t i = 0; i < n; ++i) out << format_number(dec.grid.axis(i).nodes[idx[i]]) << ",";
    out << format_number(fitted[p++]) << "\n";
  } while (next_multi_index(idx, shape));
}

inline void write_scaling_csv(std::ostream& out, const std::vector<ScalingRow>& rows) {
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  out << "n,m,rms,scaled,bound,mc_rms,mc_se\n";
  for (const auto& r : rows)
    out << r.n << "," << r.m << "," << format_number(r.rms) << "," << format_number(r.scaled) << "," << opt(r.bound)
        << "," << opt(r.mc_rms) << "," << opt(r.mc_se) << "\n";
}

inline Json scaling_json(const std::vector<ScalingRow>& rows) {
  Json a = Json::array();
  for (const auto& r : rows) {
    Json j{{"n", r.n}, {"m", r.m}, {"rms", r.rms}, {"scaled", r.scaled}};
    if (r.bound) j["bound"] = *r.bound;
    if (r.mc_rms) j["mc_rms"] = *r.mc_rms;
    if (r.mc_se) j["mc_se"] = *r.mc_se;
    a.push_back(std::move(j));
  }
  return a;
}

inline Json experiment_metadata(const ExperimentConfig& cfg) {
  Json j;
  j["experiment"] = to_string(cfg.name);
  j["dims"] = cfg.dims;
  j["orders"] = cfg.orders;
  j["seed"] = cfg.seed;
  j["samples"] = cfg.samples;
  Json notes = Json::array();
  notes.push_back("m labels the remainder f - P_{m-1} f (order m-1 approximation)");
  notes.push_back("rms from the closed product form; mc_rms is an independent Monte Carlo re-estimate");
  if (cfg.name == ExperimentName::example1) {
    notes.push_back("f = exp(-|x|^2/n) under uniform(-1,1)^n");
    notes.push_back("bound = sqrt(4^m / (3^m m! n^m))");
  }
  if (cfg.name == ExperimentName::example2) {
    notes.push_back("f = (1+sin x_1)(1+sin x_2)(1+sin x_3), x_i ~ normal(0, 1/n)");
    notes.push_back("coordinate variance taken as 1/n");
  }
  j["notes"] = std::move(notes);
  return j;
}

inline Json counterexample_json(const CounterexampleReport& r) {
  return Json{{"function", r.function},      {"n", r.n},
              {"m", r.m},                    {"nodes_per_axis", r.nodes_per_axis},
              {"variance", r.variance},      {"anova_mse", r.anova_mse},
              {"oracle_mse", r.oracle_mse},  {"ratio", r.ratio},
              {"max_projection", r.max_projection}};
}

inline Json nearest_neighbor_json(const NearestNeighborStats& s) {
  return Json{{"n", s.n},       {"points", s.points},       {"neighbors", s.neighbors},
              {"mean", s.mean}, {"stddev", s.stddev},       {"relative_spread", s.relative_spread}};
}

struct PredictionComparison {
  std::size_t rows = 0;
  double rms = 0.0;
  double max_abs = 0.0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// rms of yhat - f(x) over a CSV with columns x_1..x_n, yhat. A header row
/// is recognized when its first cell is not numeric.
inline PredictionComparison compare_predictions(const TargetFunction& f, std::istream& in) {
  PredictionComparison out;
  std::string line;
  std::size_t lineno = 0;
  double sum_sq = 0.0;
  std::vector<double> x(f.arity);
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (lineno == 1 && !cells.empty() && !detail::parse_double(cells[0])) {
      if (cells.size() != f.arity + 1)
        throw InvalidArgument("compare_predictions: header has " + std::to_string(cells.size()) +
                              " columns, expected " + std::to_string(f.arity + 1));
      continue;
    }
    if (cells.size() != f.arity + 1)
      throw InvalidArgument("compare_predictions: line " + std::to_string(lineno) + " has " +
                            std::to_string(cells.size()) + " columns, expected " + std::to_string(f.arity + 1));
    for (std::size_t i = 0; i <= f.arity; ++i) {
      auto v = detail::parse_double(cells[i]);
      if (!v) throw IoError("compare_predictions: bad number '" + cells[i] + "' on line " + std::to_string(lineno));
      if (i < f.arity)
        x[i] = *v;
      else {
        const double e = *v - f(x);
        sum_sq += e * e;
        out.max_abs = std::max(out.max_abs, std::abs(e));
      }
    }
    ++out.rows;
  }
  if (out.rows == 0) throw InvalidArgument("compare_predictions: no prediction rows");
  out.rms = std::sqrt(sum_sq / static_cast<double>(out.rows));
  return out;
}

inline PredictionComparison compare_predictions(const TargetFunction& f, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("compare_predictions: cannot open " + path);
  return compare_predictions(f, in);
}

}  // namespace anova
