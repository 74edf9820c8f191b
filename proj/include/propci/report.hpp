#pragma once

#include <optional>
#include <string>
#include <vector>

#include "propci/estimators.hpp"
#include "propci/evaluation.hpp"

// Rendering layer: locale-independent number formatting, the percent style
// used by the interval reports, CSV emission for curve sweeps, and a small
// SVG renderer over the same rows.
namespace propci::report {

using estimators::Interval;
using estimators::Method;
using estimators::MethodSpec;
using evaluation::CurvePoint;
using evaluation::Regime;

// Shortest-deterministic serialization at 9 significant digits, '.' decimal
// separator regardless of locale.
std::string format_number(double v);

// Percent rendering with round-half-away-from-zero to one decimal; values
// under 0.095% keep two decimals so small bounds stay visible. Exact zero
// prints as "0".
std::string render_percent(double proportion);

// One-sided error thresholds drawn on the figures: 1.5x and 1/1.5x the
// nominal one-sided risk.
struct ReferenceLines {
  double upper_line;
  double lower_line;
  static ReferenceLines for_alpha(double alpha);
};

enum class BoundsPolicy { MethodDefault, Raw, Clamped };

// Raw bounds for the methods whose published table shows them unclamped
// (wald, boot_basic), clamped bounds elsewhere.
bool method_reports_raw(Method m);
std::pair<double, double> policy_bounds(Method m, const Interval& iv,
                                        BoundsPolicy policy);

struct Table2Row {
  Method method;
  std::int64_t x, n;
  std::string lower_pct, upper_pct;
  double lower_exact, upper_exact;
};

// The worked-example matrix: eight estimators applied to 1/225 and 2/46.
std::vector<Table2Row> table2_rows(double alpha = 0.05,
                                   BoundsPolicy policy = BoundsPolicy::MethodDefault);
std::string table2_csv(double alpha = 0.05,
                       BoundsPolicy policy = BoundsPolicy::MethodDefault);

struct CurveSeries {
  Method method;
  Regime regime;
  std::vector<CurvePoint> points;  // ordered by (n, lambda)
};

// Columns: method,regime,n,lambda,p0,alpha_l,alpha_u,two_sided,w_l,w_u,
// ratio_l,ratio_u. Width fields are empty for error-only runs. Rows sorted
// by (method id, n, lambda); '\n' line endings.
std::string curves_csv(std::vector<CurveSeries> series);

// Log-x rendering of one method's error (or half-width ratio) curves with
// the reference lines; per-n colors red/green/blue for 32/64/2048.
std::string curves_svg(const CurveSeries& series, const ReferenceLines& lines,
                       bool widths);

std::string interval_text(const MethodSpec& method, std::int64_t x, std::int64_t n,
                          double alpha, BoundsPolicy policy);

}  // namespace propci::report
