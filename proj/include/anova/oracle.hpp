#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "anova/anova_core.hpp"
#include "anova/error.hpp"
#include "anova/quadrature.hpp"
#include "anova/target.hpp"

namespace anova {

/// Small discrete model for brute-force least squares onto L_{2,m}: a tensor
/// grid with an arbitrary joint probability table.
class DiscreteModel {
 public:
  static constexpr std::size_t kMaxDims = 4;
  static constexpr std::size_t kMaxNodesPerAxis = 64;

  /// Product weights taken from the grid's axis rules.
  explicit DiscreteModel(GridSpec grid) : DiscreteModel(grid, grid_weights(grid)) {}

  DiscreteModel(GridSpec grid, std::vector<double> joint) : grid_(std::move(grid)), joint_(std::move(joint)) {
    if (grid_.dims() == 0 || grid_.dims() > kMaxDims)
      throw CapacityError("DiscreteModel: dimension " + std::to_string(grid_.dims()) + " outside 1.." +
                          std::to_string(kMaxDims));
    for (const auto& a : grid_.axes())
      if (a.size() > kMaxNodesPerAxis)
        throw CapacityError("DiscreteModel: more than " + std::to_string(kMaxNodesPerAxis) + " nodes on an axis");
    if (joint_.size() != grid_.total_points()) throw InvalidArgument("DiscreteModel: joint table has wrong size");
    double s = 0.0;
    for (double w : joint_) {
      if (!(w >= 0.0)) throw InvalidArgument("DiscreteModel: negative joint weight");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-10) throw InvalidArgument("DiscreteModel: joint weights sum to " + std::to_string(s));
  }

  const GridSpec& grid() const noexcept { return grid_; }
  const std::vector<double>& joint() const noexcept { return joint_; }

  /// Per-axis marginals of the joint table, as a product grid.
  GridSpec marginal_grid() const {
    std::vector<std::size_t> shape;
    for (const auto& a : grid_.axes()) shape.push_back(a.size());
    std::vector<AxisRule> axes;
    for (std::size_t i = 0; i < grid_.dims(); ++i) axes.push_back(AxisRule{grid_.axis(i).nodes, std::vector<double>(shape[i], 0.0)});
    std::vector<std::size_t> idx(shape.size(), 0);
    std::size_t p = 0;
    do {
      for (std::size_t i = 0; i < idx.size(); ++i) axes[i].weights[idx[i]] += joint_[p];
      ++p;
    } while (next_multi_index(idx, shape));
    for (auto& a : axes) {
      double s = 0.0;
      for (double w : a.weights) s += w;
      for (auto& w : a.weights) w /= s;
    }
    return GridSpec(std::move(axes));
  }

 private:
  GridSpec grid_;
  std::vector<double> joint_;
};

struct LeastSquaresFit {
  std::vector<double> fit;
  /// Weighted mean squared error under the model's joint weights.
  double mse = 0.0;
  std::size_t rank = 0;
  std::size_t columns = 0;
  /// The indicator basis is redundant for m >= 1; the minimum-norm solution still gives a unique fit.
  bool rank_deficient = false;
};

/// Best weighted least-squares fit of `values` by sums of grid functions of
/// at most m coordinates, via a minimum-norm solve of the indicator design.
inline LeastSquaresFit ls_project(std::span<const double> values, const DiscreteModel& model, std::size_t m) {
  const GridSpec& grid = model.grid();
  const std::size_t n = grid.dims();
  if (values.size() != grid.total_points()) throw InvalidArgument("ls_project: values do not match the model grid");
  if (m > n) throw InvalidArgument("ls_project: order exceeds dimension");
  const auto subsets = enumerate_subsets(n, m);
  std::vector<std::size_t> offsets;
  std::size_t cols = 0;
  for (const auto& u : subsets) {
    offsets.push_back(cols);
    std::size_t c = 1;
    for (auto i : u) c *= grid.axis(i).size();
    cols += c;
  }
  const std::size_t rows = values.size();
  if (static_cast<double>(rows) * static_cast<double>(cols) > 5e7)
    throw CapacityError("ls_project: design matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " is too large");

  std::vector<std::size_t> shape;
  for (const auto& a : grid.axes()) shape.push_back(a.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  Eigen::VectorXd b(static_cast<Eigen::Index>(rows));
  std::vector<std::size_t> idx(n, 0);
  std::size_t p = 0;
  do {
    const double sw = std::sqrt(model.joint()[p]);
    for (std::size_t s = 0; s < subsets.size(); ++s) {
      std::size_t flat = 0;
      for (auto i : subsets[s]) flat = flat * shape[i] + idx[i];
      A(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(offsets[s] + flat)) = sw;
    }
    b(static_cast<Eigen::Index>(p)) = sw * values[p];
    ++p;
  } while (next_multi_index(idx, shape));

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  const Eigen::VectorXd beta = cod.solve(b);

  LeastSquaresFit out;
  out.columns = cols;
  out.rank = static_cast<std::size_t>(cod.rank());
  out.rank_deficient = out.rank < cols;
  out.fit.assign(rows, 0.0);
  std::fill(idx.begin(), idx.end(), 0);
  p = 0;
  do {
    double v = 0.0;
    for (std::size_t s = 0; s < subsets.size(); ++s) {
      std::size_t flat = 0;
      for (auto i : subsets[s]) flat = flat * shape[i] + idx[i];
      v += beta(static_cast<Eigen::Index>(offsets[s] + flat));
    }
    out.fit[p] = v;
    const double e = values[p] - v;
    out.mse += model.joint()[p] * e * e;
    ++p;
  } while (next_multi_index(idx, shape));
  return out;
}

struct OptimalityReport {
  std::size_t order = 0;
  double oracle_mse = 0.0;
  double anova_mse = 0.0;
  /// anova_mse - oracle_mse; never below -1e-10 when the oracle is correct.
  double mse_gap = 0.0;
  double max_pointwise_discrepancy = 0.0;
  std::size_t rank = 0;
  std::size_t columns = 0;
};

namespace detail {

inline OptimalityReport fill_report(std::span<const double> values, std::span<const double> joint,
                                    std::span<const double> projected, const LeastSquaresFit& ls, std::size_t m) {
  OptimalityReport rep;
  rep.order = m;
  rep.oracle_mse = ls.mse;
  rep.rank = ls.rank;
  rep.columns = ls.columns;
  for (std::size_t p = 0; p < values.size(); ++p) {
    const double e = values[p] - projected[p];
    rep.anova_mse += joint[p] * e * e;
    rep.max_pointwise_discrepancy = std::max(rep.max_pointwise_discrepancy, std::abs(projected[p] - ls.fit[p]));
  }
  rep.mse_gap = rep.anova_mse - rep.oracle_mse;
  return rep;
}

}  // namespace detail

/// Compares the ANOVA projection under the joint table's marginals with the
/// least-squares optimum under the joint table itself. For a product table
/// the two coincide; otherwise the oracle may be strictly better.
inline OptimalityReport compare_with_oracle(std::span<const double> values, const DiscreteModel& model, std::size_t m) {
  const auto dec = project_grid_values(values, model.marginal_grid(), m);
  const auto projected = projection_on_grid(dec);
  return detail::fill_report(values, model.joint(), projected, ls_project(values, model, m), m);
}

/// Builds the discrete model from pm's quadrature nodes and checks that
/// project() returns the least-squares optimum.
inline OptimalityReport verify_optimality(const TargetFunction& f, const ProductMeasure& pm, std::size_t m,
                                          std::size_t order = 0) {
  EngineOptions opt;
  opt.quadrature_order = order;
  const auto dec = project(f, pm, m, opt);
  if (dec.backend != Backend::grid) throw CapacityError("verify_optimality: grid is too large for the exact backend");
  const DiscreteModel model(dec.grid);
  const auto values = evaluate_on_grid(f, dec.grid);
  const auto projected = projection_on_grid(dec);
  return detail::fill_report(values, model.joint(), projected, ls_project(values, model, m), m);
}

}  // namespace anova
