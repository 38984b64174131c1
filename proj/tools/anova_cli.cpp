// Command-line front end for the anova library.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "anova/anova.hpp"

using namespace anova;

namespace {

/// Reads a JSON object into CLI11 config items. Nested objects address
/// subcommands, e.g. {"seed": 3, "decompose": {"m": 2}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    Json j;
    try {
      j = Json::parse(in);
    } catch (const std::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void collect(const Json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, v] : obj.items()) {
      if (v.is_object()) {
        auto p = parents;
        p.push_back(key);
        collect(v, p, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (v.is_array())
        for (const auto& e : v) item.inputs.push_back(scalar(e));
      else
        item.inputs.push_back(scalar(v));
      items.push_back(std::move(item));
    }
  }
};

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "json";
  bool verbose = false;
  unsigned threads = 0;
};

struct MeasureFlags {
  std::vector<std::string> marginals;
  std::size_t dim = 0;
  std::size_t order = 0;
};

void add_measure_flags(CLI::App* sub, MeasureFlags& m, const std::string& default_marginal) {
  m.marginals = {default_marginal};
  sub->add_option("--marginal", m.marginals,
                  "Marginal as kind:param:param (uniform:a:b, normal:mean:var, empirical:path.csv:col); repeat for "
                  "heterogeneous measures")
      ->capture_default_str();
  sub->add_option("--dim", m.dim, "Dimension for a homogeneous measure built from one --marginal");
  sub->add_option("--order", m.order, "Quadrature nodes per axis (0 keeps the default)");
}

Marginal parse_marginal(const std::string& spec) {
  const auto first = spec.find(':');
  const std::string kind = spec.substr(0, first);
  auto number = [&spec](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw CLI::ValidationError("--marginal", "bad number '" + s + "' in " + spec);
    return v;
  };
  if (kind == "empirical") {
    const auto last = spec.rfind(':');
    if (first == std::string::npos || last == first)
      throw CLI::ValidationError("--marginal", "expected empirical:path:column, got " + spec);
    return empirical_from_csv(spec.substr(first + 1, last - first - 1),
                              static_cast<std::size_t>(number(spec.substr(last + 1))));
  }
  std::vector<std::string> parts;
  std::stringstream ss(spec.substr(first == std::string::npos ? spec.size() : first + 1));
  std::string p;
  while (std::getline(ss, p, ':')) parts.push_back(p);
  if ((kind == "uniform" || kind == "normal") && parts.size() == 2) {
    const double a = number(parts[0]), b = number(parts[1]);
    return kind == "uniform" ? Marginal::uniform(a, b) : Marginal::normal(a, b);
  }
  throw CLI::ValidationError("--marginal", "expected uniform:a:b, normal:mean:var or empirical:path:col, got " + spec);
}

ProductMeasure build_measure(const MeasureFlags& f, std::size_t default_dim = 1) {
  std::vector<Marginal> ms;
  for (const auto& s : f.marginals) ms.push_back(parse_marginal(s));
  if (ms.size() == 1) {
    ProductMeasure pm = ProductMeasure::homogeneous(ms[0], f.dim ? f.dim : default_dim);
    return f.order ? pm.with_order(f.order) : pm;
  }
  if (f.dim && f.dim != ms.size())
    throw CLI::ValidationError("--dim", "conflicts with the number of --marginal flags");
  ProductMeasure pm(std::move(ms));
  return f.order ? pm.with_order(f.order) : pm;
}

std::vector<std::size_t> parse_list(const std::string& s, const std::string& flag) {
  std::vector<std::size_t> out;
  auto num = [&](const std::string& t) -> std::size_t {
    try {
      std::size_t used = 0;
      long long v = std::stoll(t, &used);
      if (used != t.size() || v < 0) throw std::invalid_argument(t);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "bad integer '" + t + "'");
    }
  };
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) {
      out.push_back(num(part));
    } else {
      const std::size_t a = num(part.substr(0, colon)), b = num(part.substr(colon + 1));
      if (a > b) throw CLI::ValidationError(flag, "empty range " + part);
      for (std::size_t k = a; k <= b; ++k) out.push_back(k);
    }
  }
  if (out.empty()) throw CLI::ValidationError(flag, "empty list");
  return out;
}

std::string num6(double v) { return format_number(v, 6); }

/// Writes the report to --out (json, or flat key,value csv) when requested.
void emit_report(const Globals& g, const Json& report) {
  if (g.out.empty()) return;
  std::ofstream out(g.out);
  if (!out) throw IoError("cannot write " + g.out);
  if (g.format == "json") {
    out << report.dump(2) << "\n";
    return;
  }
  out << "key,value\n";
  for (const auto& [k, v] : report.items()) {
    if (v.is_number_float())
      out << k << "," << format_number(v.get<double>()) << "\n";
    else if (v.is_primitive())
      out << k << "," << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
    else
      out << k << "," << '"' << v.dump() << '"' << "\n";
  }
}

// Prints the scalar members of a report, 6 significant digits.
void print_report(const Json& report) {
  for (const auto& [k, v] : report.items()) {
    if (v.is_number_float())
      std::cout << k << ": " << num6(v.get<double>()) << "\n";
    else if (v.is_boolean())
      std::cout << k << ": " << (v.get<bool>() ? "true" : "false") << "\n";
    else if (v.is_string())
      std::cout << k << ": " << v.get<std::string>() << "\n";
    else if (v.is_number())
      std::cout << k << ": " << v.dump() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Truncated ANOVA decompositions, error constants and scaling experiments"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with option values; command-line flags take precedence");

  Globals g;
  app.add_option("--seed", g.seed, "Seed for all randomness")->capture_default_str();
  app.add_option("--out", g.out, "Output file");
  app.add_option("--format", g.format, "Output file format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  app.add_flag("--verbose,-v", g.verbose, "Extra diagnostics on stderr");
  app.add_option("--threads", g.threads, "Worker thread cap (0 = all cores)")->capture_default_str();

  // gamma
  auto* gamma = app.add_subcommand("gamma", "Error constant gamma of a product measure");
  MeasureFlags gamma_m;
  add_measure_flags(gamma, gamma_m, "uniform:-1:1");
  std::vector<double> window;
  gamma->add_option("--window", window, "Restrict the integration square to [lo,hi]^2")->expected(2);
  int gamma_power = 0;
  gamma->add_option("--power", gamma_power, "Also report the bound gamma^m for this m");

  // decompose
  auto* decompose = app.add_subcommand("decompose", "ANOVA projection P_m f of a builtin function");
  MeasureFlags dec_m;
  add_measure_flags(decompose, dec_m, "uniform:-1:1");
  std::string dec_fn = "gauss";
  std::size_t dec_order = 1;
  std::size_t mc_samples = std::size_t{1} << 14;
  std::size_t grid_limit = 1'000'000;
  std::string export_grid;
  bool closed_form = false;
  decompose->add_option("--fn", dec_fn, "Builtin function")->check(CLI::IsMember(builtin_names()))->capture_default_str();
  decompose->add_option("--m", dec_order, "Interaction order")->capture_default_str();
  decompose->add_option("--mc-samples", mc_samples, "Monte Carlo samples per conditional expectation")->capture_default_str();
  decompose->add_option("--grid-limit", grid_limit, "Largest grid evaluated exactly")->capture_default_str();
  decompose->add_option("--export-grid", export_grid, "CSV of P_m f at the grid nodes");
  decompose->add_flag("--closed-form", closed_form, "Use the product-form closed form");

  // bound
  auto* bound = app.add_subcommand("bound", "Smoothness bound gamma^m |f|_m^2 against the measured remainder");
  MeasureFlags bound_m;
  add_measure_flags(bound, bound_m, "uniform:-1:1");
  std::string bound_fn = "gauss";
  std::size_t bound_order = 1;
  std::size_t probes = 1024;
  bound->add_option("--fn", bound_fn, "Builtin function")->check(CLI::IsMember(builtin_names()))->capture_default_str();
  bound->add_option("--m", bound_order, "Order m of the seminorm; the remainder is f - P_{m-1} f")->capture_default_str();
  bound->add_option("--probes", probes, "Random probe points for the seminorm")->capture_default_str();

  // quasi
  auto* quasi = app.add_subcommand("quasi", "Sandwich check under a truncated correlated Gaussian");
  std::size_t quasi_dim = 2;
  double rho = 0.5;
  double half_width = 2.0;
  std::size_t quasi_order = 1;
  std::size_t nodes = 64;
  std::string quasi_fn = "product";
  quasi->add_option("--dim", quasi_dim, "Dimension (2 or 3)")->capture_default_str();
  quasi->add_option("--rho", rho, "Equicorrelation")->capture_default_str();
  quasi->add_option("--half-width", half_width, "Truncation box [-h,h]^n")->capture_default_str();
  quasi->add_option("--m", quasi_order, "Interaction order")->capture_default_str();
  quasi->add_option("--nodes", nodes, "Gauss-Legendre nodes per axis")->capture_default_str();
  quasi->add_option("--fn", quasi_fn, "Builtin function")->check(CLI::IsMember(builtin_names()))->capture_default_str();
  bool quasi_independent = false;
  quasi->add_flag("--independent", quasi_independent, "Use the product of uniform(-h,h) marginals instead");

  // oracle-check
  auto* oracle = app.add_subcommand("oracle-check", "Compare P_m f with the brute-force least-squares optimum");
  std::size_t oracle_n = 3, oracle_order = 1, oracle_nodes = 9;
  std::string oracle_fn = "product";
  std::string oracle_marginal = "uniform:-1:1";
  oracle->add_option("--n", oracle_n, "Dimension (at most 4)")->capture_default_str();
  oracle->add_option("--m", oracle_order, "Interaction order")->capture_default_str();
  oracle->add_option("--fn", oracle_fn, "Builtin function")->check(CLI::IsMember(builtin_names()))->capture_default_str();
  oracle->add_option("--nodes", oracle_nodes, "Nodes per axis")->capture_default_str();
  oracle->add_option("--marginal", oracle_marginal, "Marginal for every axis")->capture_default_str();

  // experiment
  auto* experiment = app.add_subcommand("experiment", "Scaling experiments, counterexamples and concentration demos");
  std::string exp_name;
  std::string dims_text, orders_text = "1,2,3,4";
  std::size_t samples = 100'000;
  double epsilon = 0.2, c1 = kSphereC1, c2 = kSphereC2;
  experiment
      ->add_option("name", exp_name,
                   "example1 | example2 | counterexample_product | counterexample_bumps | concentration_nn | "
                   "concentration_dim")
      ->required()
      ->check(CLI::IsMember({"example1", "example2", "counterexample_product", "counterexample_bumps",
                             "concentration_nn", "concentration_dim"}));
  experiment->add_option("--dims", dims_text, "Dimensions as a:b or a,b,c");
  experiment->add_option("--orders", orders_text, "Orders m as a list")->capture_default_str();
  experiment->add_option("--samples", samples, "Monte Carlo points (0 disables the sanity column)")->capture_default_str();
  experiment->add_option("--epsilon", epsilon, "Accuracy for concentration_dim")->capture_default_str();
  experiment->add_option("--c1", c1, "Constant C1 for concentration_dim")->capture_default_str();
  experiment->add_option("--c2", c2, "Constant C2 for concentration_dim")->capture_default_str();

  // compare-predictions
  auto* compare = app.add_subcommand("compare-predictions", "rms of external predictions against a builtin function");
  std::string cmp_fn = "gauss";
  std::size_t cmp_dim = 0;
  std::string predictions;
  compare->add_option("--fn", cmp_fn, "Builtin function")->check(CLI::IsMember(builtin_names()))->capture_default_str();
  compare->add_option("--dim", cmp_dim, "Arity of the builtin")->required();
  compare->add_option("--predictions", predictions, "CSV with columns x_1..x_n,yhat")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gamma->parsed()) {
      const auto pm = build_measure(gamma_m);
      GammaOptions opt;
      if (!window.empty()) opt.window = std::make_pair(window[0], window[1]);
      const auto r = gamma_constant(pm, opt);
      Json rep{{"measure", describe(pm)}, {"gamma", r.value}, {"coarse", r.coarse}, {"fine", r.fine},
               {"window_lo", r.window.first}, {"window_hi", r.window.second}, {"nodes_per_axis", r.nodes_per_axis}};
      if (gamma_power > 0) rep["gamma_m_bound"] = gamma_m_bound(r.value, gamma_power);
      print_report(rep);
      emit_report(g, rep);
    } else if (decompose->parsed()) {
      const auto pm = build_measure(dec_m, 3);
      const auto f = make_builtin(dec_fn, pm.dims());
      EngineOptions opt;
      opt.seed = g.seed;
      opt.threads = g.threads;
      opt.mc_samples = mc_samples;
      opt.grid_limit = grid_limit;
      AnovaDecomposition dec = closed_form ? product_form_anova(f, pm).to_decomposition(dec_order)
                                           : project(f, pm, dec_order, opt);
      const auto res = residual_mse(dec, f, opt);
      Json rep = decomposition_json(dec, res);
      std::cout << "measure: " << rep["measure"].get<std::string>() << "\n"
                << "backend: " << to_string(dec.backend) << "\n"
                << "mean: " << num6(dec.mean) << "\n";
      for (const auto& t : rep["terms"])
        std::cout << "term " << t["subset"].get<std::string>() << ": " << num6(t["variance"].get<double>()) << "\n";
      std::cout << "residual_mse: " << num6(res.mse) << "\n";
      if (g.verbose && res.parseval_route && res.direct_route)
        std::cerr << "parseval route " << format_number(*res.parseval_route) << ", direct route "
                  << format_number(*res.direct_route) << "\n";
      emit_report(g, rep);
      if (!export_grid.empty()) {
        std::ofstream out(export_grid);
        if (!out) throw IoError("cannot write " + export_grid);
        write_grid_csv(out, dec);
      }
    } else if (bound->parsed()) {
      const auto pm = build_measure(bound_m, 3);
      const auto f = make_builtin(bound_fn, pm.dims());
      const double gval = gamma_constant(pm).value;
      const auto sm = seminorm(f, pm, bound_order, probes, g.seed);
      EngineOptions opt;
      opt.seed = g.seed;
      opt.threads = g.threads;
      Json rep{{"measure", describe(pm)},
               {"m", bound_order},
               {"gamma", gval},
               {"seminorm_sq", sm.seminorm_sq},
               {"seminorm_method", to_string(sm.method)},
               {"seminorm_is_lower_bound", sm.lower_bound},
               {"probe_points", sm.sample_points_used},
               {"bound", theorem3_bound(gval, bound_order, sm.seminorm_sq)}};
      if (bound_order >= 1) {
        const auto dec = f.product_form ? product_form_anova(f, pm).to_decomposition(bound_order - 1)
                                        : project(f, pm, bound_order - 1, opt);
        rep["measured_residual"] = residual_mse(dec, f, opt).mse;
      }
      print_report(rep);
      emit_report(g, rep);
    } else if (quasi->parsed()) {
      const auto d = quasi_independent
                         ? independent_density(ProductMeasure::homogeneous(Marginal::uniform(-half_width, half_width), quasi_dim))
                         : truncated_gaussian(quasi_dim, rho, half_width);
      const auto f = make_builtin(quasi_fn, quasi_dim);
      const auto r = kappa_sandwich(d, f, quasi_order, nodes);
      Json rep{{"density", d.label},
               {"m", quasi_order},
               {"nodes", r.nodes},
               {"lower", r.lower},
               {"mid", r.mid},
               {"upper", r.upper},
               {"kappa", r.kappa},
               {"sup_psi", r.sup_psi},
               {"sup_inv_psi", r.sup_inv_psi},
               {"declared_sup_dP_dPotimes", d.ess_sup_dP_dPotimes},
               {"declared_sup_dPotimes_dP", d.ess_sup_dPotimes_dP},
               {"holds", r.holds}};
      print_report(rep);
      emit_report(g, rep);
      if (!r.holds) return 1;
    } else if (oracle->parsed()) {
      const auto pm = ProductMeasure::homogeneous(parse_marginal(oracle_marginal), oracle_n);
      const auto r = verify_optimality(make_builtin(oracle_fn, oracle_n), pm, oracle_order, oracle_nodes);
      const bool ok = std::abs(r.mse_gap) < 1e-8 && r.max_pointwise_discrepancy < 1e-8;
      Json rep{{"function", oracle_fn},
               {"n", oracle_n},
               {"m", oracle_order},
               {"nodes_per_axis", oracle_nodes},
               {"oracle_mse", r.oracle_mse},
               {"anova_mse", r.anova_mse},
               {"mse_gap", r.mse_gap},
               {"max_pointwise_discrepancy", r.max_pointwise_discrepancy},
               {"rank", r.rank},
               {"columns", r.columns},
               {"within_tolerance", ok}};
      print_report(rep);
      emit_report(g, rep);
    } else if (experiment->parsed()) {
      ExperimentConfig cfg;
      cfg.name = parse_experiment_name(exp_name);
      cfg.seed = g.seed;
      cfg.samples = samples;
      cfg.threads = g.threads;
      cfg.output = g.out;
      cfg.orders = parse_list(orders_text, "--orders");
      if (cfg.name == ExperimentName::concentration_dim) {
        const std::size_t n = concentration_min_dimension(epsilon, c1, c2);
        Json rep{{"epsilon", epsilon}, {"c1", c1}, {"c2", c2}, {"min_dimension", n}};
        if (auto q = quoted_min_dimension(epsilon); q && c1 == kSphereC1 && c2 == kSphereC2)
          rep["quoted_dimension"] = *q;
        print_report(rep);
        emit_report(g, rep);
        return 0;
      }
      if (dims_text.empty()) {
        switch (cfg.name) {
          case ExperimentName::example1: dims_text = "2:50"; break;
          case ExperimentName::example2: dims_text = "1:100"; break;
          case ExperimentName::counterexample_product: dims_text = "2:4"; break;
          case ExperimentName::counterexample_bumps: dims_text = "2:3"; break;
          default: dims_text = "1,2,10,100"; break;
        }
      }
      cfg.dims = parse_list(dims_text, "--dims");
      if (cfg.name == ExperimentName::concentration_nn && samples == 100'000) cfg.samples = 10'000;

      if (cfg.name == ExperimentName::example1 || cfg.name == ExperimentName::example2) {
        const auto rows = cfg.name == ExperimentName::example1 ? run_example1(cfg) : run_example2(cfg);
        if (g.out.empty() || g.verbose) {
          std::cout << "n,m,rms,scaled,bound,mc_rms,mc_se\n";
          for (const auto& r : rows)
            std::cout << r.n << "," << r.m << "," << num6(r.rms) << "," << num6(r.scaled) << ","
                      << (r.bound ? num6(*r.bound) : "") << "," << (r.mc_rms ? num6(*r.mc_rms) : "") << ","
                      << (r.mc_se ? num6(*r.mc_se) : "") << "\n";
        }
        if (!g.out.empty()) {
          std::ofstream out(g.out);
          if (!out) throw IoError("cannot write " + g.out);
          Json meta = experiment_metadata(cfg);
          if (g.format == "json") {
            meta["rows"] = scaling_json(rows);
            out << meta.dump(2) << "\n";
          } else {
            write_scaling_csv(out, rows);
            std::ofstream side(g.out + ".json");
            if (!side) throw IoError("cannot write " + g.out + ".json");
            side << meta.dump(2) << "\n";
          }
        }
      } else if (cfg.name == ExperimentName::concentration_nn) {
        const auto stats = concentration_nn_demo(cfg);
        Json rows = Json::array();
        std::cout << "n,points,neighbors,mean,stddev,relative_spread\n";
        for (const auto& s : stats) {
          std::cout << s.n << "," << s.points << "," << s.neighbors << "," << num6(s.mean) << "," << num6(s.stddev)
                    << "," << num6(s.relative_spread) << "\n";
          rows.push_back(nearest_neighbor_json(s));
        }
        if (!g.out.empty()) {
          std::ofstream out(g.out);
          if (!out) throw IoError("cannot write " + g.out);
          if (g.format == "json") {
            out << Json{{"experiment", exp_name}, {"seed", g.seed}, {"rows", rows}}.dump(2) << "\n";
          } else {
            out << "n,points,neighbors,mean,stddev,relative_spread\n";
            for (const auto& s : stats)
              out << s.n << "," << s.points << "," << s.neighbors << "," << format_number(s.mean) << ","
                  << format_number(s.stddev) << "," << format_number(s.relative_spread) << "\n";
          }
        }
      } else {
        const auto reps = run_counterexamples(cfg);
        Json rows = Json::array();
        for (const auto& r : reps) {
          std::cout << r.function << " n=" << r.n << " m=" << r.m << ": variance " << num6(r.variance) << ", anova_mse "
                    << num6(r.anova_mse) << ", oracle_mse " << num6(r.oracle_mse) << ", ratio " << num6(r.ratio)
                    << "\n";
          rows.push_back(counterexample_json(r));
        }
        if (!g.out.empty()) {
          std::ofstream out(g.out);
          if (!out) throw IoError("cannot write " + g.out);
          if (g.format == "json") {
            out << Json{{"experiment", exp_name}, {"rows", rows}}.dump(2) << "\n";
          } else {
            out << "function,n,m,nodes_per_axis,variance,anova_mse,oracle_mse,ratio,max_projection\n";
            for (const auto& r : reps)
              out << r.function << "," << r.n << "," << r.m << "," << r.nodes_per_axis << ","
                  << format_number(r.variance) << "," << format_number(r.anova_mse) << ","
                  << format_number(r.oracle_mse) << "," << format_number(r.ratio) << ","
                  << format_number(r.max_projection) << "\n";
          }
        }
      }
    } else if (compare->parsed()) {
      const auto r = compare_predictions(make_builtin(cmp_fn, cmp_dim), predictions);
      Json rep{{"function", cmp_fn}, {"rows", r.rows}, {"rms", r.rms}, {"max_abs", r.max_abs}};
      print_report(rep);
      emit_report(g, rep);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
