// propci: binomial proportion confidence intervals and their coverage-error
// evaluation (conditional, local-average, random-sample-size), with CSV and
// SVG output for the curve sweeps.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "propci/estimators.hpp"
#include "propci/evaluation.hpp"
#include "propci/report.hpp"

namespace est = propci::estimators;
namespace eval = propci::evaluation;
namespace report = propci::report;

namespace {

struct GridArgs {
  std::vector<std::int64_t> sizes{32, 64, 2048};
  double lambda_min = 0.05;
  double lambda_max = 100.0;
  int lambda_count = 400;
  double alpha = 0.05;
  double or_s = 1.20;

  eval::EvaluationGrid grid() const {
    eval::EvaluationGrid g;
    g.sample_sizes = sizes;
    g.lambda_values =
        eval::EvaluationGrid::log_spaced(lambda_min, lambda_max, lambda_count);
    g.alpha = alpha;
    g.or_s = or_s;
    return g;
  }
};

void add_grid_options(CLI::App* cmd, GridArgs& args) {
  cmd->add_option("--n", args.sizes, "sample sizes")->capture_default_str();
  cmd->add_option("--lambda-min", args.lambda_min, "smallest expected successes")
      ->capture_default_str();
  cmd->add_option("--lambda-max", args.lambda_max, "largest expected successes")
      ->capture_default_str();
  cmd->add_option("--lambda-count", args.lambda_count, "lambda grid size")
      ->capture_default_str();
  cmd->add_option("--alpha", args.alpha, "two-sided nominal error")
      ->capture_default_str();
  cmd->add_option("--or-s", args.or_s, "typical odds ratio of the mixing law")
      ->capture_default_str();
}

eval::Regime parse_regime(const std::string& s) {
  if (s == "conditional") return eval::Regime::Conditional;
  if (s == "local_average") return eval::Regime::LocalAverage;
  if (s == "random_size") return eval::Regime::RandomSize;
  throw CLI::ValidationError("--regime",
                             "expected conditional, local_average or random_size");
}

std::vector<est::MethodSpec> parse_methods(const std::vector<std::string>& ids,
                                           est::WilsonSmallXLevel level) {
  std::vector<est::MethodSpec> out;
  for (const auto& id : ids) {
    if (id == "all") {
      for (est::Method m : est::method_catalog()) {
        est::MethodSpec spec(m);
        spec.wilson_small_x_level = level;
        out.push_back(spec);
      }
      continue;
    }
    est::MethodSpec spec(est::method_from_id(id));
    spec.wilson_small_x_level = level;
    out.push_back(spec);
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

void emit(const std::optional<std::string>& path, const std::string& content) {
  if (path) {
    write_file(*path, content);
  } else {
    std::cout << content;
  }
}

std::string svg_path_for(const std::string& base, std::string_view method) {
  const auto dot = base.rfind('.');
  const std::string stem = dot == std::string::npos ? base : base.substr(0, dot);
  return stem + "_" + std::string(method) + ".svg";
}

const char* check_mark(bool ok) { return ok ? "ok" : "FAIL"; }

// Quick empirical checks printed by the properties report.
bool check_equivariance(const est::MethodSpec& spec, double alpha) {
  const est::ConfidenceSpec conf(alpha);
  for (std::int64_t n : {7, 23, 50}) {
    for (std::int64_t x = 0; x <= n; ++x) {
      const auto iv = est::interval(spec, {x, n}, conf);
      const auto mirror = est::interval(spec, {n - x, n}, conf);
      if (std::fabs(iv.upper_raw - (1.0 - mirror.lower_raw)) > 1e-12) return false;
    }
  }
  return true;
}

bool check_monotone_x(const est::MethodSpec& spec, double alpha) {
  const est::ConfidenceSpec conf(alpha);
  for (std::int64_t n : {7, 23, 50}) {
    double prev_lo = -1.0, prev_hi = -1.0;
    for (std::int64_t x = 0; x <= n; ++x) {
      const auto iv = est::interval(spec, {x, n}, conf);
      if (x > 0) {
        if (iv.lower < prev_lo - 1e-12 || iv.upper < prev_hi - 1e-12) return false;
        if (prev_lo > 0.0 && iv.lower > 0.0 && prev_lo < 1.0 && iv.lower < 1.0 &&
            iv.lower <= prev_lo + 1e-15 && iv.lower != prev_lo) {
          return false;
        }
      }
      prev_lo = iv.lower;
      prev_hi = iv.upper;
    }
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"binomial proportion confidence intervals and coverage evaluation"};
  app.set_config("--config", "", "flat key=value configuration file");
  app.require_subcommand(1);

  std::string wilson_level_str = "alpha";
  app.add_option("--wilson-small-x-level", wilson_level_str,
                 "chi-square quantile level of the modified Wilson small-x "
                 "branch: alpha (as published) or half_alpha")
      ->check(CLI::IsMember({"alpha", "half_alpha"}));

  // ---- interval ----
  auto* c_interval = app.add_subcommand("interval", "one confidence interval");
  std::string iv_method = "clopper_pearson_midp";
  std::int64_t iv_x = 0, iv_n = 1;
  double iv_alpha = 0.05;
  bool iv_clamp = false, iv_raw = false;
  c_interval->add_option("--method", iv_method, "estimator id")->capture_default_str();
  c_interval->add_option("--x", iv_x, "success count")->required();
  c_interval->add_option("--n", iv_n, "trial count")->required();
  c_interval->add_option("--alpha", iv_alpha, "two-sided nominal error")
      ->capture_default_str();
  c_interval->add_flag("--clamp", iv_clamp, "report clamped bounds for all methods");
  c_interval->add_flag("--raw", iv_raw, "report raw bounds for all methods");

  // ---- table2 ----
  auto* c_table2 = app.add_subcommand(
      "table2", "interval matrix for the worked example (1/225 and 2/46)");
  double t2_alpha = 0.05;
  std::optional<std::string> t2_out;
  bool t2_clamp = false, t2_raw = false;
  c_table2->add_option("--alpha", t2_alpha)->capture_default_str();
  c_table2->add_option("--out", t2_out, "output CSV path (default: stdout)");
  c_table2->add_flag("--clamp", t2_clamp, "clamped bounds for all rows");
  c_table2->add_flag("--raw", t2_raw, "raw bounds for all rows");

  // ---- curves / halfwidths ----
  GridArgs curve_grid;
  std::vector<std::string> curve_methods{"all"};
  std::string curve_regime = "local_average";
  std::optional<std::string> curve_out;
  std::string curve_format = "csv";
  int curve_nodes = 24;
  auto* c_curves = app.add_subcommand("curves", "error curves over the lambda grid");
  add_grid_options(c_curves, curve_grid);
  c_curves->add_option("--methods", curve_methods, "estimator ids or 'all'")
      ->capture_default_str();
  c_curves->add_option("--regime", curve_regime,
                       "conditional, local_average or random_size")
      ->capture_default_str();
  c_curves->add_option("--out", curve_out, "output CSV path (default: stdout)");
  c_curves->add_option("--format", curve_format, "csv or svg")
      ->check(CLI::IsMember({"csv", "svg"}));
  c_curves->add_option("--nodes", curve_nodes, "quadrature nodes per panel")
      ->capture_default_str();

  GridArgs hw_grid;
  std::vector<std::string> hw_methods{"all"};
  std::string hw_reference = "clopper_pearson_midp";
  std::optional<std::string> hw_out;
  std::string hw_format = "csv";
  int hw_nodes = 24;
  auto* c_hw = app.add_subcommand(
      "halfwidths", "local-average half-width curves relative to a reference");
  add_grid_options(c_hw, hw_grid);
  c_hw->add_option("--methods", hw_methods)->capture_default_str();
  c_hw->add_option("--reference", hw_reference)->capture_default_str();
  c_hw->add_option("--out", hw_out, "output CSV path (default: stdout)");
  c_hw->add_option("--format", hw_format)->check(CLI::IsMember({"csv", "svg"}));
  c_hw->add_option("--nodes", hw_nodes)->capture_default_str();

  // ---- scan ----
  GridArgs scan_grid;
  std::string scan_method = "clopper_pearson_midp";
  std::string scan_regime = "conditional";
  auto* c_scan = app.add_subcommand("scan", "largest one-sided error over the grid");
  add_grid_options(c_scan, scan_grid);
  c_scan->add_option("--method", scan_method)->capture_default_str();
  c_scan->add_option("--regime", scan_regime)->capture_default_str();

  // ---- validity ----
  GridArgs validity_grid;
  validity_grid.sizes = {256, 2048};
  validity_grid.lambda_min = 1.0;
  validity_grid.lambda_max = 1945.0;
  validity_grid.lambda_count = 160;
  std::int64_t validity_threshold = 40;
  auto* c_validity = app.add_subcommand(
      "validity", "Wald validity rule min(x, n-x) > threshold");
  add_grid_options(c_validity, validity_grid);
  c_validity->add_option("--threshold", validity_threshold)->capture_default_str();

  // ---- properties ----
  auto* c_props = app.add_subcommand("properties", "method property matrix");
  std::vector<std::string> props_methods{"all"};
  double props_alpha = 0.05;
  c_props->add_option("--method,--methods", props_methods)->capture_default_str();
  c_props->add_option("--alpha", props_alpha)->capture_default_str();

  // ---- calibrate ----
  auto* c_cal = app.add_subcommand("calibrate",
                                   "location of the logit-normal mixing law");
  double cal_p0 = 0.1, cal_ors = 1.20;
  c_cal->add_option("--p0", cal_p0, "expected proportion")->required();
  c_cal->add_option("--or-s", cal_ors)->capture_default_str();

  // ---- oracle ----
  auto* c_oracle = app.add_subcommand("oracle", "seeded Monte-Carlo cross-check");
  std::string oracle_method = "clopper_pearson_midp";
  std::string oracle_regime = "local_average";
  std::int64_t oracle_n = 64;
  double oracle_lambda = 4.0, oracle_ors = 1.20, oracle_alpha = 0.05;
  std::int64_t oracle_draws = 1000000;
  std::uint64_t oracle_seed = 20240001;
  c_oracle->add_option("--method", oracle_method)->capture_default_str();
  c_oracle->add_option("--regime", oracle_regime)->capture_default_str();
  c_oracle->add_option("--n", oracle_n)->capture_default_str();
  c_oracle->add_option("--lambda", oracle_lambda)->capture_default_str();
  c_oracle->add_option("--or-s", oracle_ors)->capture_default_str();
  c_oracle->add_option("--alpha", oracle_alpha)->capture_default_str();
  c_oracle->add_option("--draws", oracle_draws)->capture_default_str();
  c_oracle->add_option("--seed", oracle_seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  const est::WilsonSmallXLevel wilson_level =
      wilson_level_str == "alpha" ? est::WilsonSmallXLevel::FullAlpha
                                  : est::WilsonSmallXLevel::HalfAlpha;

  try {
    if (*c_interval) {
      est::MethodSpec spec(est::method_from_id(iv_method));
      spec.wilson_small_x_level = wilson_level;
      const auto policy = iv_raw ? report::BoundsPolicy::Raw
                                 : (iv_clamp ? report::BoundsPolicy::Clamped
                                             : report::BoundsPolicy::MethodDefault);
      std::cout << report::interval_text(spec, iv_x, iv_n, iv_alpha, policy);
      return 0;
    }

    if (*c_table2) {
      const auto policy = t2_raw ? report::BoundsPolicy::Raw
                                 : (t2_clamp ? report::BoundsPolicy::Clamped
                                             : report::BoundsPolicy::MethodDefault);
      emit(t2_out, report::table2_csv(t2_alpha, policy));
      return 0;
    }

    if (*c_curves || *c_hw) {
      const bool widths = static_cast<bool>(*c_hw);
      const GridArgs& ga = widths ? hw_grid : curve_grid;
      const auto grid = ga.grid();
      const auto regime =
          widths ? eval::Regime::LocalAverage : parse_regime(curve_regime);
      eval::CurveOptions options;
      options.with_widths = widths;
      options.quad.nodes_per_panel = widths ? hw_nodes : curve_nodes;
      if (widths) {
        options.width_reference = est::method_from_id(hw_reference);
      }
      const auto specs =
          parse_methods(widths ? hw_methods : curve_methods, wilson_level);
      std::vector<report::CurveSeries> series;
      for (const auto& spec : specs) {
        report::CurveSeries s;
        s.method = spec.id;
        s.regime = regime;
        s.points = eval::error_curve(spec, grid, regime, options);
        series.push_back(std::move(s));
      }
      const auto& out = widths ? hw_out : curve_out;
      const auto& fmt = widths ? hw_format : curve_format;
      if (fmt == "svg") {
        if (!out) throw std::runtime_error("--format svg requires --out");
        const auto lines = report::ReferenceLines::for_alpha(grid.alpha);
        for (const auto& s : series) {
          write_file(svg_path_for(*out, est::method_id(s.method)),
                     report::curves_svg(s, lines, widths));
        }
      }
      emit(out, report::curves_csv(std::move(series)));
      return 0;
    }

    if (*c_scan) {
      est::MethodSpec spec(est::method_from_id(scan_method));
      spec.wilson_small_x_level = wilson_level;
      const auto res = eval::max_error_scan(spec, scan_grid.grid(),
                                            parse_regime(scan_regime));
      std::cout << "method: " << scan_method << "  regime: " << scan_regime
                << "\nmax one-sided error: " << report::format_number(res.max_error)
                << "  side: " << res.side << "\nat n=" << res.n
                << " lambda=" << report::format_number(res.lambda)
                << " p=" << report::format_number(res.p) << "\n";
      return 0;
    }

    if (*c_validity) {
      const est::ConfidenceSpec conf(validity_grid.alpha);
      const auto rep = eval::wald_validity_check(validity_threshold, conf,
                                                 validity_grid.grid());
      std::cout << "threshold min(x, n-x) > " << validity_threshold
                << "  points used: " << rep.points_used
                << "\nworst one-sided local-average error: "
                << report::format_number(rep.max_error) << " (side " << rep.side
                << ", n=" << rep.n_at_max
                << ", lambda=" << report::format_number(rep.lambda_at_max) << ")"
                << "\nlimit 1.5*(alpha/2) = " << report::format_number(rep.limit)
                << "\nresult: " << (rep.pass ? "PASS" : "FAIL") << "\n";
      return rep.pass ? 0 : 2;
    }

    if (*c_props) {
      const auto specs = parse_methods(props_methods, wilson_level);
      std::printf("%-28s %-12s %-9s %-11s %-13s %-13s %-13s %-11s\n", "method",
                  "equivariant", "analytic", "monotone_x", "multivariate",
                  "deterministic", "equiv_check", "mono_check");
      for (const auto& spec : specs) {
        const auto p = est::method_properties(spec.id);
        const bool eq_ok = check_equivariance(spec, props_alpha);
        const bool mono_ok = !p.monotone_in_x || check_monotone_x(spec, props_alpha);
        std::printf("%-28s %-12s %-9s %-11s %-13s %-13s %-13s %-11s\n",
                    std::string(est::method_id(spec.id)).c_str(),
                    p.equivariant ? "yes" : "no",
                    p.analytic_solution ? "yes" : "no",
                    p.monotone_in_x ? "yes" : "no",
                    p.generalizes_multivariate ? "yes" : "no",
                    p.deterministic ? "yes" : "no", check_mark(eq_ok),
                    p.monotone_in_x ? check_mark(mono_ok) : "n/a");
      }
      return 0;
    }

    if (*c_cal) {
      const auto model = eval::RandomProportionModel::calibrated(cal_p0, cal_ors);
      std::cout << "p0: " << report::format_number(model.p0)
                << "\nOR_S: " << report::format_number(model.or_s)
                << "\nsigma: " << report::format_number(model.sigma)
                << "\nmu: " << report::format_number(model.mu) << "\n";
      return 0;
    }

    if (*c_oracle) {
      est::MethodSpec spec(est::method_from_id(oracle_method));
      spec.wilson_small_x_level = wilson_level;
      const est::ConfidenceSpec conf(oracle_alpha);
      eval::ErrorReport rep;
      const double p0 = oracle_lambda / static_cast<double>(oracle_n);
      if (oracle_regime == "local_average") {
        const auto model = eval::RandomProportionModel::calibrated(p0, oracle_ors);
        rep = eval::monte_carlo_oracle(spec, oracle_n, model, conf, oracle_draws,
                                       oracle_seed);
      } else if (oracle_regime == "random_size") {
        eval::RandomSampleSizeModel model;
        model.n_center = oracle_n;
        model.sigma_n = std::log(oracle_ors);
        model.p = p0;
        rep = eval::monte_carlo_oracle(spec, model, conf, oracle_draws, oracle_seed);
      } else {
        throw CLI::ValidationError("--regime",
                                   "oracle supports local_average or random_size");
      }
      std::cout << "alpha_l: " << report::format_number(rep.alpha_l) << " +- "
                << report::format_number(rep.se_l)
                << "\nalpha_u: " << report::format_number(rep.alpha_u) << " +- "
                << report::format_number(rep.se_u)
                << "\ntwo_sided: " << report::format_number(rep.two_sided())
                << "\nseed: " << oracle_seed << "  draws: " << oracle_draws << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
