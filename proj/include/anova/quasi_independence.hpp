#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "anova/anova_core.hpp"
#include "anova/error.hpp"
#include "anova/marginals.hpp"
#include "anova/oracle.hpp"
#include "anova/quadrature.hpp"
#include "anova/target.hpp"

namespace anova {

/// A joint density p on a bounded box together with its marginals p_i and
/// bounds on both Radon-Nikodym derivatives between P and the product P(x).
struct DependentDensity {
  PointFunction joint_pdf;
  ProductMeasure marginals;
  std::vector<std::pair<double, double>> support;
  /// ess sup dP/dP(x) = sup p / prod p_i.
  double ess_sup_dP_dPotimes = 1.0;
  /// ess sup dP(x)/dP = sup prod p_i / p.
  double ess_sup_dPotimes_dP = 1.0;
  std::string label;

  std::size_t dims() const { return marginals.dims(); }

  bool in_support(std::span<const double> x) const {
    for (std::size_t i = 0; i < support.size(); ++i)
      if (x[i] < support[i].first || x[i] > support[i].second) return false;
    return true;
  }

  double kappa() const { return ess_sup_dP_dPotimes * ess_sup_dPotimes_dP; }
};

/// psi(x) = prod_i p_i(x_i) / p(x).
inline double rn_weight(const DependentDensity& d, std::span<const double> x) {
  if (x.size() != d.dims()) throw InvalidArgument("rn_weight: point has wrong dimension");
  if (!d.in_support(x)) throw InvalidArgument("rn_weight: point outside the declared support");
  const double p = d.joint_pdf(x);
  if (!(p > 0.0)) throw EquivalenceViolation("rn_weight: joint density vanishes inside the support");
  return d.marginals.density(x) / p;
}

/// Tensor Gauss-Legendre discretization of the joint density on its box.
inline DiscreteModel joint_model(const DependentDensity& d, std::size_t nodes) {
  std::vector<AxisRule> axes;
  std::vector<AxisRule> raw;
  for (const auto& [lo, hi] : d.support) {
    AxisRule r = gauss_legendre(nodes, lo, hi);
    raw.push_back(r);
    AxisRule a = r;
    for (auto& w : a.weights) w /= (hi - lo);
    axes.push_back(std::move(a));
  }
  GridSpec grid(std::move(axes));
  std::vector<std::size_t> shape(grid.dims(), nodes);
  std::vector<double> joint;
  joint.reserve(grid.total_points());
  std::vector<std::size_t> idx(grid.dims(), 0);
  std::vector<double> x(grid.dims());
  double total = 0.0;
  do {
    double w = 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = raw[i].nodes[idx[i]];
      w *= raw[i].weights[idx[i]];
    }
    const double v = w * d.joint_pdf(x);
    joint.push_back(v);
    total += v;
  } while (next_multi_index(idx, shape));
  for (auto& v : joint) v /= total;
  return DiscreteModel(std::move(grid), std::move(joint));
}

namespace detail {

// max of psi and 1/psi over a uniform lattice (box edges included), inflated by `safety`.
inline std::pair<double, double> lattice_ess_sups(const PointFunction& joint, const ProductMeasure& marginals,
                                                  const std::vector<std::pair<double, double>>& box,
                                                  std::size_t per_axis, double safety) {
  const std::size_t n = box.size();
  std::vector<std::size_t> shape(n, per_axis);
  std::vector<std::size_t> idx(n, 0);
  std::vector<double> x(n);
  double max_psi = 0.0;
  double max_inv = 0.0;
  do {
    for (std::size_t i = 0; i < n; ++i)
      x[i] = box[i].first + (box[i].second - box[i].first) * static_cast<double>(idx[i]) / static_cast<double>(per_axis - 1);
    const double p = joint(x);
    const double q = marginals.density(x);
    if (!(p > 0.0) || !(q > 0.0)) throw EquivalenceViolation("ess sup estimation: density vanishes on the box");
    max_psi = std::max(max_psi, q / p);
    max_inv = std::max(max_inv, p / q);
  } while (next_multi_index(idx, shape));
  return {max_inv * safety, max_psi * safety};
}

}  // namespace detail

/// Independent joint: p = prod p_i on the marginals' bounded supports.
inline DependentDensity independent_density(const ProductMeasure& pm) {
  DependentDensity d{[pm](std::span<const double> x) { return pm.density(x); }, pm, {}, 1.0, 1.0, "independent"};
  for (const auto& m : pm.marginals()) {
    auto s = m.support();
    if (!std::isfinite(s.first) || !std::isfinite(s.second))
      throw InvalidArgument("independent_density: marginals need bounded support");
    d.support.push_back(s);
  }
  return d;
}

/// Equicorrelated Gaussian (correlation rho) truncated to [-h,h]^n and
/// renormalized, n in {2,3}. Both density ratios are bounded on the box, so
/// the variables are quasi-independent. The ess-sup fields come from a
/// lattice maximum inflated by 5%.
inline DependentDensity truncated_gaussian(std::size_t n, double rho, double half_width = 2.0,
                                           std::size_t quadrature_order = 16) {
  if (n != 2 && n != 3) throw InvalidArgument("truncated_gaussian: dimension must be 2 or 3");
  if (!(rho > -1.0 / static_cast<double>(n - 1) && rho < 1.0))
    throw InvalidArgument("truncated_gaussian: correlation makes the covariance singular");
  if (!(half_width > 0.0)) throw InvalidArgument("truncated_gaussian: half width must be positive");
  // inverse of (1-rho) I + rho 11^T is a I + b 11^T
  const double nn = static_cast<double>(n);
  const double a = 1.0 / (1.0 - rho);
  const double b = -rho / ((1.0 - rho) * (1.0 + (nn - 1.0) * rho));
  auto unnormalized = [a, b](std::span<const double> x) {
    double sq = 0.0;
    double s = 0.0;
    for (double v : x) {
      sq += v * v;
      s += v;
    }
    return std::exp(-0.5 * (a * sq + b * s * s));
  };
  // normalizer by composite tensor Gauss-Legendre
  const double h = half_width;
  AxisRule axis = gauss_legendre(24, -h, 0.0);
  {
    AxisRule right = gauss_legendre(24, 0.0, h);
    axis.nodes.insert(axis.nodes.end(), right.nodes.begin(), right.nodes.end());
    axis.weights.insert(axis.weights.end(), right.weights.begin(), right.weights.end());
  }
  std::vector<std::size_t> shape(n, axis.size());
  std::vector<std::size_t> idx(n, 0);
  std::vector<double> x(n);
  double Z = 0.0;
  do {
    double w = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = axis.nodes[idx[i]];
      w *= axis.weights[idx[i]];
    }
    Z += w * unnormalized(x);
  } while (next_multi_index(idx, shape));
  auto joint = [unnormalized, Z, h](std::span<const double> y) {
    for (double v : y)
      if (v < -h || v > h) return 0.0;
    return unnormalized(y) / Z;
  };

  std::function<double(double)> marginal_raw;
  if (n == 2) {
    const double s = std::sqrt(1.0 - rho * rho);
    marginal_raw = [rho, s, h](double t) {
      return detail::std_normal_pdf(t) *
             (detail::std_normal_cdf((h - rho * t) / s) - detail::std_normal_cdf((-h - rho * t) / s));
    };
  } else {
    marginal_raw = [unnormalized, axis](double t) {
      double acc = 0.0;
      double y[3] = {t, 0.0, 0.0};
      for (std::size_t j = 0; j < axis.size(); ++j)
        for (std::size_t k = 0; k < axis.size(); ++k) {
          y[1] = axis.nodes[j];
          y[2] = axis.nodes[k];
          acc += axis.weights[j] * axis.weights[k] * unnormalized(std::span<const double>(y, 3));
        }
      return acc;
    };
  }
  std::ostringstream label;
  label << "truncnorm(n=" << n << ",rho=" << rho << ",h=" << h << ")";
  auto table = std::make_shared<const DensityTable>(marginal_raw, -h, h, label.str() + "-marginal", n == 2 ? 256 : 64);
  ProductMeasure marginals = ProductMeasure::homogeneous(Marginal::tabulated(table, quadrature_order), n);

  DependentDensity d{joint, marginals, std::vector<std::pair<double, double>>(n, {-h, h}), 1.0, 1.0, label.str()};
  auto [sup_inv, sup_psi] = detail::lattice_ess_sups(joint, marginals, d.support, n == 2 ? 201 : 21, 1.05);
  d.ess_sup_dP_dPotimes = sup_inv;
  d.ess_sup_dPotimes_dP = sup_psi;
  return d;
}

/// P_m under the product of d's marginals (the measure P(x)).
inline AnovaDecomposition weighted_project(const TargetFunction& f, const DependentDensity& d, std::size_t m,
                                           const EngineOptions& opt = {}) {
  return project(f, d.marginals, m, opt);
}

/// E_P((f - P_m f)^2) under the joint density, by tensor quadrature.
inline double mse_under_joint(const AnovaDecomposition& dec, const TargetFunction& f, const DependentDensity& d,
                              std::size_t nodes = 48) {
  const DiscreteModel model = joint_model(d, nodes);
  const auto values = evaluate_on_grid(f, model.grid());
  std::vector<std::size_t> shape(model.grid().dims(), nodes);
  std::vector<std::size_t> idx(shape.size(), 0);
  std::vector<double> x(shape.size());
  double s = 0.0;
  std::size_t p = 0;
  do {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = model.grid().axis(i).nodes[idx[i]];
    const double e = values[p] - dec.evaluate(x);
    s += model.joint()[p] * e * e;
    ++p;
  } while (next_multi_index(idx, shape));
  return s;
}

/// gamma^m ||dP/dP(x)||_inf |f|_m^2.
inline double theorem4_bound(const DependentDensity& d, double gamma, std::size_t m, double seminorm_sq) {
  if (!std::isfinite(d.ess_sup_dP_dPotimes)) throw InvalidArgument("theorem4_bound: ess sup must be finite");
  if (!(gamma >= 0.0) || !(seminorm_sq >= 0.0)) throw InvalidArgument("theorem4_bound: negative input");
  return std::pow(gamma, static_cast<double>(m)) * d.ess_sup_dP_dPotimes * seminorm_sq;
}

struct SandwichReport {
  /// min over L_{2,m} of E_P((f-g)^2) (oracle).
  double lower = 0.0;
  /// E_P((f - P_m(x) f)^2).
  double mid = 0.0;
  /// kappa * lower.
  double upper = 0.0;
  double kappa = 1.0;
  double sup_psi = 1.0;
  double sup_inv_psi = 1.0;
  std::size_t nodes = 0;
  bool holds = false;
};

/// Checks min_g E(f-g)^2 <= E(R(x)_m f)^2 <= kappa min_g E(f-g)^2 on a
/// discretized joint. Marginals and psi are those of the discrete joint, so
/// the inequalities hold exactly up to rounding.
inline SandwichReport kappa_sandwich(const DependentDensity& d, const TargetFunction& f, std::size_t m,
                                     std::size_t nodes = 64, double tolerance = 1e-8) {
  if (f.arity != d.dims()) throw InvalidArgument("kappa_sandwich: arity does not match density");
  const DiscreteModel model = joint_model(d, nodes);
  const auto values = evaluate_on_grid(f, model.grid());
  const GridSpec product = model.marginal_grid();
  const auto dec = project_grid_values(values, product, m);
  const auto fitted = projection_on_grid(dec);
  const auto product_w = grid_weights(product);

  SandwichReport rep;
  rep.nodes = nodes;
  rep.sup_psi = 0.0;
  rep.sup_inv_psi = 0.0;
  for (std::size_t p = 0; p < values.size(); ++p) {
    const double w = model.joint()[p];
    if (!(w > 0.0)) throw EquivalenceViolation("kappa_sandwich: joint weight vanishes on the grid");
    const double psi = product_w[p] / w;
    rep.sup_psi = std::max(rep.sup_psi, psi);
    rep.sup_inv_psi = std::max(rep.sup_inv_psi, 1.0 / psi);
    const double e = values[p] - fitted[p];
    rep.mid += w * e * e;
  }
  rep.kappa = rep.sup_psi * rep.sup_inv_psi;
  rep.lower = ls_project(values, model, m).mse;
  rep.upper = rep.kappa * rep.lower;
  rep.holds = rep.lower <= rep.mid + tolerance && rep.mid <= rep.upper + tolerance;
  return rep;
}

/// E_P(y) and E_{P(x)}(y / psi) by tensor quadrature on the box.
inline std::pair<double, double> reweighted_expectations(const DependentDensity& d, const PointFunction& y,
                                                         std::size_t nodes = 48) {
  std::vector<AxisRule> axes;
  for (const auto& [lo, hi] : d.support) axes.push_back(gauss_legendre(nodes, lo, hi));
  std::vector<std::size_t> shape(axes.size(), nodes);
  std::vector<std::size_t> idx(axes.size(), 0);
  std::vector<double> x(axes.size());
  double direct = 0.0;
  double reweighted = 0.0;
  do {
    double w = 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = axes[i].nodes[idx[i]];
      w *= axes[i].weights[idx[i]];
    }
    const double yv = y(x);
    direct += w * yv * d.joint_pdf(x);
    reweighted += w * yv * d.marginals.density(x) / rn_weight(d, x);
  } while (next_multi_index(idx, shape));
  return {direct, reweighted};
}

}  // namespace anova
