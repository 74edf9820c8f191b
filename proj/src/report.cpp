#include "propci/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace propci::report {

using estimators::BinomialSample;
using estimators::ConfidenceSpec;
using estimators::interval;
using estimators::method_id;

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::general, 9);
  return std::string(buf, res.ptr);
}

std::string render_percent(double proportion) {
  const double pct = proportion * 100.0;
  if (pct == 0.0) return "0";
  char buf[48];
  if (std::fabs(pct) < 0.095) {
    const double r = std::round(pct * 100.0) / 100.0;
    std::snprintf(buf, sizeof(buf), "%.2f", r);
  } else {
    const double r = std::round(pct * 10.0) / 10.0;
    std::snprintf(buf, sizeof(buf), "%.1f", r);
  }
  return buf;
}

ReferenceLines ReferenceLines::for_alpha(double alpha) {
  const double one_sided = 0.5 * alpha;
  return ReferenceLines{one_sided * 1.5, one_sided / 1.5};
}

bool method_reports_raw(Method m) {
  return m == Method::Wald || m == Method::BootBasic;
}

std::pair<double, double> policy_bounds(Method m, const Interval& iv,
                                        BoundsPolicy policy) {
  const bool raw = policy == BoundsPolicy::Raw ||
                   (policy == BoundsPolicy::MethodDefault && method_reports_raw(m));
  if (raw) return {iv.lower_raw, iv.upper_raw};
  return {iv.lower, iv.upper};
}

std::vector<Table2Row> table2_rows(double alpha, BoundsPolicy policy) {
  static const Method kRowOrder[] = {
      Method::BootPercentile,      Method::BootBasic,
      Method::Wald,                Method::ClopperPearson,
      Method::ClopperPearsonMidP,  Method::Wilson,
      Method::WaldLogitModified,   Method::LikelihoodRatioModified,
  };
  static const std::pair<std::int64_t, std::int64_t> kSamples[] = {{1, 225}, {2, 46}};
  const ConfidenceSpec conf(alpha);
  std::vector<Table2Row> rows;
  for (Method m : kRowOrder) {
    for (const auto& [x, n] : kSamples) {
      const Interval iv = interval(MethodSpec{m}, BinomialSample{x, n}, conf);
      const auto [lo, hi] = policy_bounds(m, iv, policy);
      rows.push_back(Table2Row{m, x, n, render_percent(lo), render_percent(hi),
                               lo, hi});
    }
  }
  return rows;
}

std::string table2_csv(double alpha, BoundsPolicy policy) {
  std::string out = "method,x,n,lower_pct,upper_pct,lower_exact,upper_exact\n";
  for (const auto& r : table2_rows(alpha, policy)) {
    out += std::string(method_id(r.method)) + ',' + std::to_string(r.x) + ',' +
           std::to_string(r.n) + ',' + r.lower_pct + ',' + r.upper_pct + ',' +
           format_number(r.lower_exact) + ',' + format_number(r.upper_exact) +
           '\n';
  }
  return out;
}

namespace {

std::string_view regime_id(Regime r) {
  switch (r) {
    case Regime::Conditional:
      return "conditional";
    case Regime::LocalAverage:
      return "local_average";
    case Regime::RandomSize:
      return "random_size";
  }
  return "unknown";
}

}  // namespace

std::string curves_csv(std::vector<CurveSeries> series) {
  std::sort(series.begin(), series.end(),
            [](const CurveSeries& a, const CurveSeries& b) {
              return method_id(a.method) < method_id(b.method);
            });
  std::string out =
      "method,regime,n,lambda,p0,alpha_l,alpha_u,two_sided,w_l,w_u,ratio_l,"
      "ratio_u\n";
  for (const auto& s : series) {
    for (const auto& pt : s.points) {
      out += std::string(method_id(s.method)) + ',' + std::string(regime_id(s.regime)) +
             ',' + std::to_string(pt.n) + ',' + format_number(pt.lambda) + ',' +
             format_number(pt.p0) + ',' + format_number(pt.errors.alpha_l) + ',' +
             format_number(pt.errors.alpha_u) + ',' +
             format_number(pt.errors.two_sided()) + ',';
      if (pt.widths) {
        out += format_number(pt.widths->w_l) + ',' + format_number(pt.widths->w_u) +
               ',' + format_number(pt.widths->ratio_l) + ',' +
               format_number(pt.widths->ratio_u);
      } else {
        out += ",,,";
      }
      out += '\n';
    }
  }
  return out;
}

namespace {

struct SvgMapper {
  double x0, x1, y0, y1;          // data ranges (x in log10 lambda)
  double px0, px1, py0, py1;      // pixel box
  double x(double lx) const {
    return px0 + (lx - x0) / (x1 - x0) * (px1 - px0);
  }
  double y(double v) const {
    return py1 - (v - y0) / (y1 - y0) * (py1 - py0);
  }
};

const char* color_for_n(std::int64_t n) {
  if (n == 32) return "#cc2222";
  if (n == 64) return "#22aa22";
  if (n == 2048) return "#2244cc";
  return "#888888";
}

void append_polyline(std::string& out, const SvgMapper& map,
                     const std::vector<std::pair<double, double>>& pts,
                     const char* color, bool dashed) {
  if (pts.empty()) return;
  out += "<polyline fill=\"none\" stroke=\"";
  out += color;
  out += "\" stroke-width=\"1.2\"";
  if (dashed) out += " stroke-dasharray=\"5,3\"";
  out += " points=\"";
  char buf[64];
  for (const auto& [lx, v] : pts) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", map.x(lx), map.y(v));
    out += buf;
  }
  out += "\"/>\n";
}

}  // namespace

std::string curves_svg(const CurveSeries& series, const ReferenceLines& lines,
                       bool widths) {
  const double W = 920.0, H = 620.0;
  SvgMapper map;
  map.px0 = 70.0;
  map.px1 = W - 30.0;
  map.py0 = 40.0;
  map.py1 = H - 50.0;

  double lx_min = 1e300, lx_max = -1e300, y_max = 0.0;
  for (const auto& pt : series.points) {
    const double lx = std::log10(pt.lambda);
    lx_min = std::min(lx_min, lx);
    lx_max = std::max(lx_max, lx);
    if (widths && pt.widths) {
      y_max = std::max({y_max, pt.widths->ratio_l, pt.widths->ratio_u});
    } else {
      y_max = std::max({y_max, pt.errors.alpha_l, pt.errors.alpha_u});
    }
  }
  if (!(lx_max > lx_min)) {
    lx_min = -1.0;
    lx_max = 2.0;
  }
  y_max = std::max(y_max, widths ? 2.0 : 2.0 * lines.upper_line) * 1.05;
  map.x0 = lx_min;
  map.x1 = lx_max;
  map.y0 = 0.0;
  map.y1 = y_max;

  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" "
                "height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                W, H, W, H);
  out += buf;
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.0f\" y=\"24\" font-family=\"sans-serif\" "
                "font-size=\"16\">%s (%s, dashed: lower side)</text>\n",
                map.px0, std::string(method_id(series.method)).c_str(),
                widths ? "half-width ratio vs mid-P" : "one-sided error");
  out += buf;

  // axes box
  std::snprintf(buf, sizeof(buf),
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" "
                "fill=\"none\" stroke=\"black\"/>\n",
                map.px0, map.py0, map.px1 - map.px0, map.py1 - map.py0);
  out += buf;
  // decade ticks on the lambda axis
  for (int d = static_cast<int>(std::ceil(lx_min)); d <= static_cast<int>(std::floor(lx_max)); ++d) {
    const double px = map.x(d);
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                  "stroke=\"#cccccc\"/>\n<text x=\"%.1f\" y=\"%.1f\" "
                  "font-family=\"sans-serif\" font-size=\"12\" "
                  "text-anchor=\"middle\">%g</text>\n",
                  px, map.py0, px, map.py1, px, map.py1 + 16.0, std::pow(10.0, d));
    out += buf;
  }
  // y ticks
  const double ystep = y_max > 0.5 ? 0.25 : (y_max > 0.12 ? 0.05 : 0.01);
  for (double v = 0.0; v <= y_max + 1e-12; v += ystep) {
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                  "stroke=\"#eeeeee\"/>\n<text x=\"%.1f\" y=\"%.1f\" "
                  "font-family=\"sans-serif\" font-size=\"12\" "
                  "text-anchor=\"end\">%.3g</text>\n",
                  map.px0, map.y(v), map.px1, map.y(v), map.px0 - 6.0,
                  map.y(v) + 4.0, v);
    out += buf;
  }
  if (!widths) {
    for (double line : {lines.upper_line, lines.lower_line}) {
      std::snprintf(buf, sizeof(buf),
                    "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                    "stroke=\"#999999\" stroke-dasharray=\"2,4\"/>\n",
                    map.px0, map.y(line), map.px1, map.y(line));
      out += buf;
    }
  } else {
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                  "stroke=\"#999999\" stroke-dasharray=\"2,4\"/>\n",
                  map.px0, map.y(1.0), map.px1, map.y(1.0));
    out += buf;
  }

  std::vector<std::int64_t> ns;
  for (const auto& pt : series.points) {
    if (std::find(ns.begin(), ns.end(), pt.n) == ns.end()) ns.push_back(pt.n);
  }
  for (std::int64_t n : ns) {
    std::vector<std::pair<double, double>> lower_pts, upper_pts;
    for (const auto& pt : series.points) {
      if (pt.n != n) continue;
      const double lx = std::log10(pt.lambda);
      if (widths && pt.widths) {
        lower_pts.emplace_back(lx, std::min(pt.widths->ratio_l, map.y1));
        upper_pts.emplace_back(lx, std::min(pt.widths->ratio_u, map.y1));
      } else {
        lower_pts.emplace_back(lx, std::min(pt.errors.alpha_l, map.y1));
        upper_pts.emplace_back(lx, std::min(pt.errors.alpha_u, map.y1));
      }
    }
    append_polyline(out, map, lower_pts, color_for_n(n), true);
    append_polyline(out, map, upper_pts, color_for_n(n), false);
  }
  out += "</svg>\n";
  return out;
}

std::string interval_text(const MethodSpec& method, std::int64_t x, std::int64_t n,
                          double alpha, BoundsPolicy policy) {
  const ConfidenceSpec conf(alpha);
  const Interval iv = interval(method, BinomialSample{x, n}, conf);
  const auto [lo, hi] = policy_bounds(method.id, iv, policy);
  std::ostringstream os;
  os << "method: " << method_id(method.id) << "\n"
     << "x/n: " << x << "/" << n << "  alpha: " << format_number(alpha) << "\n"
     << "point:   " << format_number(iv.point) << "\n"
     << "raw:     [" << format_number(iv.lower_raw) << ", "
     << format_number(iv.upper_raw) << "]\n"
     << "clamped: [" << format_number(iv.lower) << ", " << format_number(iv.upper)
     << "]\n"
     << "percent: " << render_percent(lo) << "% to " << render_percent(hi)
     << "%\n";
  return os.str();
}

}  // namespace propci::report
