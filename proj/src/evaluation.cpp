#include "propci/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

namespace propci::evaluation {

using estimators::BoundTableCache;
using numerics::binomial_cdf;
using numerics::binomial_tail_geq;
using numerics::gauss_legendre_reference;
using numerics::inv_logit;
using numerics::log_binomial_coefficient;
using numerics::logit;
using numerics::normal_cdf;
using numerics::normal_pdf;

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438187;

// log p and log(1-p) directly from the logit, stable over the whole line.
void logit_logs(double t, double& log_p, double& log_1mp) {
  if (t >= 0.0) {
    const double l = std::log1p(std::exp(-t));
    log_p = -l;
    log_1mp = -t - l;
  } else {
    const double l = std::log1p(std::exp(t));
    log_p = t - l;
    log_1mp = -l;
  }
}

double pmf_at_logit(std::int64_t n, std::int64_t x, double t) {
  double log_p, log_1mp;
  logit_logs(t, log_p, log_1mp);
  double lp = log_binomial_coefficient(n, x);
  if (x > 0) lp += static_cast<double>(x) * log_p;
  if (x < n) lp += static_cast<double>(n - x) * log_1mp;
  return std::exp(lp);
}

struct XWindow {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
};

// Success counts with non-negligible mass (< 1e-13 in total left outside)
// for every p in [p_lo, p_hi].
XWindow x_window(std::int64_t n, double p_lo, double p_hi) {
  const double m_lo = static_cast<double>(n) * p_lo;
  const double m_hi = static_cast<double>(n) * p_hi;
  const double s_lo = std::sqrt(m_lo * (1.0 - p_lo));
  const double s_hi = std::sqrt(m_hi * (1.0 - p_hi));
  XWindow w;
  w.lo = std::max<std::int64_t>(
      0, static_cast<std::int64_t>(std::floor(m_lo - 12.0 * s_lo - 30.0)));
  w.hi = std::min<std::int64_t>(
      n, static_cast<std::int64_t>(std::ceil(m_hi + 12.0 * s_hi + 30.0)));
  return w;
}

// Panel width resolving both the mixing normal and the binomial kernel,
// whose logit-scale curvature is bounded by n * max p(1-p) over the range.
double panel_width(std::int64_t n, double sigma, double p_lo, double p_hi) {
  double pq = std::max(p_lo * (1.0 - p_lo), p_hi * (1.0 - p_hi));
  if (p_lo < 0.5 && p_hi > 0.5) pq = 0.25;
  const double v = static_cast<double>(n) * pq;
  return std::min(sigma, 3.0 / std::sqrt(1.0 + v));
}

// Integral of f(t) * normal_pdf over [t_lo, t_hi] on fixed panels, sweeping
// from one end and stopping once contributions have peaked and died off
// (valid for log-concave f, e.g. a single binomial pmf term).
double sweep_panels(double mu, double sigma, double t_lo, double t_hi, double h,
                    int nodes, const std::function<double(double)>& f,
                    bool from_right, bool unimodal) {
  if (!(t_hi > t_lo)) return 0.0;
  const int panels =
      std::min(100000, static_cast<int>(std::ceil((t_hi - t_lo) / h)));
  const double step = (t_hi - t_lo) / panels;
  const auto& ref = gauss_legendre_reference(nodes);
  double acc = 0.0, comp = 0.0, peak = 0.0;
  for (int k = 0; k < panels; ++k) {
    const int idx = from_right ? panels - 1 - k : k;
    const double pa = t_lo + idx * step;
    const double mid = pa + 0.5 * step, hw = 0.5 * step;
    double panel = 0.0;
    for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
      const double t = mid + hw * ref.nodes[i];
      const double z = (t - mu) / sigma;
      const double w =
          hw * ref.weights[i] * kInvSqrt2Pi * std::exp(-0.5 * z * z) / sigma;
      panel += w * f(t);
    }
    const double term = panel - comp;
    const double next = acc + term;
    comp = (next - acc) - term;
    acc = next;
    if (unimodal) {
      if (panel > peak) {
        peak = panel;
      } else if (peak > 0.0 && panel < 1e-16 * peak) {
        break;
      }
    }
  }
  return acc;
}

struct MixSetup {
  double mu = 0.0;
  double sigma = 0.0;
  double t_lo = 0.0;  // mu - tail*sigma
  double t_hi = 0.0;
  double p_lo = 0.0;
  double p_hi = 0.0;
  double h = 0.0;  // panel width
  int nodes = 24;
};

MixSetup make_setup(std::int64_t n, const RandomProportionModel& model,
                    const QuadratureSettings& quad) {
  MixSetup s;
  s.mu = model.mu;
  s.sigma = model.sigma;
  s.t_lo = model.mu - quad.tail_sigmas * model.sigma;
  s.t_hi = model.mu + quad.tail_sigmas * model.sigma;
  s.p_lo = inv_logit(s.t_lo);
  s.p_hi = inv_logit(s.t_hi);
  s.h = panel_width(n, model.sigma, s.p_lo, s.p_hi);
  s.nodes = quad.nodes_per_panel;
  return s;
}

// E[pmf(x | P)] over the truncated mixing range.
double expected_pmf(const MixSetup& s, std::int64_t n, std::int64_t x) {
  double anchor = s.t_lo;
  if (x == n) {
    anchor = s.t_hi;
  } else if (x > 0) {
    anchor = std::clamp(logit(static_cast<double>(x) / static_cast<double>(n)),
                        s.t_lo, s.t_hi);
  }
  auto f = [&](double t) { return pmf_at_logit(n, x, t); };
  double v = 0.0;
  if (anchor > s.t_lo) {
    v += sweep_panels(s.mu, s.sigma, s.t_lo, anchor, s.h, s.nodes, f, true, true);
  }
  if (anchor < s.t_hi) {
    v += sweep_panels(s.mu, s.sigma, anchor, s.t_hi, s.h, s.nodes, f, false, true);
  }
  return v;
}

// Contiguous runs of flagged x values, for batched tail-difference sums.
std::vector<std::pair<std::int64_t, std::int64_t>> runs_of(
    const std::vector<std::int64_t>& xs) {
  std::vector<std::pair<std::int64_t, std::int64_t>> runs;
  for (std::int64_t x : xs) {
    if (!runs.empty() && runs.back().second + 1 == x) {
      runs.back().second = x;
    } else {
      runs.emplace_back(x, x);
    }
  }
  return runs;
}

unsigned env_thread_cap() {
  if (const char* env = std::getenv("PROPCI_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return 0;
}

std::int64_t binomial_draw(std::int64_t n, double p, double u) {
  if (p <= 0.0) return 0;
  if (p >= 1.0) return n;
  const bool flip = p > 0.5;
  const double pp = flip ? 1.0 - p : p;
  const double log_ratio_base = std::log(pp) - std::log1p(-pp);
  // CDF inversion walking up from zero; terms below the representable range
  // contribute nothing to the cumulative sum.
  double log_pmf = static_cast<double>(n) * std::log1p(-pp);
  double cum = 0.0, pmf = 0.0;
  std::int64_t k = 0;
  if (log_pmf > -700.0) {
    pmf = std::exp(log_pmf);
    cum = pmf;
  }
  while (cum <= u && k < n) {
    ++k;
    if (pmf == 0.0) {
      log_pmf += std::log(static_cast<double>(n - k + 1) / static_cast<double>(k)) +
                 log_ratio_base;
      if (log_pmf > -700.0) {
        pmf = std::exp(log_pmf);
        cum += pmf;
      }
    } else {
      pmf *= (static_cast<double>(n - k + 1) / static_cast<double>(k)) *
             (pp / (1.0 - pp));
      cum += pmf;
    }
  }
  return flip ? n - k : k;
}

struct TailCounts {
  std::int64_t below = 0;  // lower bound above the truth
  std::int64_t above = 0;  // upper bound below the truth
  std::int64_t draws = 0;
};

ErrorReport report_from_counts(const TailCounts& c, Regime regime) {
  ErrorReport r;
  r.regime = regime;
  const double m = static_cast<double>(c.draws);
  r.alpha_l = static_cast<double>(c.below) / m;
  r.alpha_u = static_cast<double>(c.above) / m;
  r.se_l = std::sqrt(std::max(0.0, r.alpha_l * (1.0 - r.alpha_l) / m));
  r.se_u = std::sqrt(std::max(0.0, r.alpha_u * (1.0 - r.alpha_u) / m));
  return r;
}

constexpr int kOracleChunks = 64;

}  // namespace

unsigned max_threads() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const unsigned cap = env_thread_cap();
  return cap ? std::min(cap, hw * 4) : hw;
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& work) {
  const unsigned threads =
      std::min<std::size_t>(max_threads(), count ? count : 1);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::mutex err_mutex;
  std::exception_ptr first_error;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          work(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

RandomProportionModel RandomProportionModel::calibrated(double p0, double or_s) {
  if (!(p0 > 0.0 && p0 < 1.0)) {
    throw std::invalid_argument("RandomProportionModel: p0 outside (0, 1)");
  }
  if (!(or_s >= 1.0)) {
    throw std::invalid_argument("RandomProportionModel: OR_S must be >= 1");
  }
  RandomProportionModel m;
  m.p0 = p0;
  m.or_s = or_s;
  m.sigma = std::log(or_s);
  m.mu = calibrate_mu(p0, m.sigma);
  return m;
}

double calibrate_mu(double p0, double sigma) {
  if (!(p0 > 0.0 && p0 < 1.0)) {
    throw std::invalid_argument("calibrate_mu: p0 outside (0, 1)");
  }
  if (!(sigma >= 0.0)) throw std::invalid_argument("calibrate_mu: sigma must be >= 0");
  if (sigma == 0.0) return logit(p0);

  static std::mutex memo_mutex;
  static std::map<std::pair<double, double>, double> memo;
  const auto key = std::make_pair(p0, sigma);
  {
    std::lock_guard<std::mutex> lock(memo_mutex);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
  }

  const auto& ref = gauss_legendre_reference(64);
  auto mean_p = [&](double mu) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
      const double z = 8.0 * ref.nodes[i];
      acc += 8.0 * ref.weights[i] * normal_pdf(z) * inv_logit(mu + sigma * z);
    }
    return acc;
  };
  double lo = logit(p0) - sigma * sigma - 2.0;
  double hi = logit(p0) + 2.0;
  while (mean_p(lo) > p0) lo -= 2.0;
  while (mean_p(hi) < p0) hi += 2.0;
  numerics::Tolerance tight;
  tight.abs_p = 1e-13;
  const double mu = numerics::find_root_monotone(
      [&](double m) { return mean_p(m) - p0; }, lo, hi, tight);

  std::lock_guard<std::mutex> lock(memo_mutex);
  memo.emplace(key, mu);
  return mu;
}

ErrorReport conditional_errors(BoundTable& table, double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("conditional_errors: p outside (0, 1)");
  }
  const std::int64_t n = table.n();
  const XWindow w = x_window(n, p, p);
  table.ensure_range(w.lo, w.hi);
  double al = 0.0, cl = 0.0, au = 0.0, cu = 0.0;  // Kahan pairs
  const double log_p = std::log(p), log_1mp = std::log1p(-p);
  for (std::int64_t x = w.lo; x <= w.hi; ++x) {
    double lp = log_binomial_coefficient(n, x);
    if (x > 0) lp += static_cast<double>(x) * log_p;
    if (x < n) lp += static_cast<double>(n - x) * log_1mp;
    const double pmf = std::exp(lp);
    if (table.lower(x) > p) {
      const double t = pmf - cl;
      const double s = al + t;
      cl = (s - al) - t;
      al = s;
    } else if (table.upper(x) < p) {
      const double t = pmf - cu;
      const double s = au + t;
      cu = (s - au) - t;
      au = s;
    }
  }
  ErrorReport r;
  r.regime = Regime::Conditional;
  r.alpha_l = al;
  r.alpha_u = au;
  return r;
}

ErrorReport conditional_errors(const MethodSpec& method, std::int64_t n, double p,
                               const ConfidenceSpec& conf) {
  auto table = BoundTableCache::global().get(method, n, conf);
  return conditional_errors(*table, p);
}

ErrorReport local_average_errors(const MethodSpec& method, std::int64_t n,
                                 const RandomProportionModel& model,
                                 const ConfidenceSpec& conf,
                                 const QuadratureSettings& quad) {
  if (model.sigma == 0.0) {
    ErrorReport r = conditional_errors(method, n, model.p0, conf);
    r.regime = Regime::LocalAverage;
    return r;
  }
  auto table_ptr = BoundTableCache::global().get(method, n, conf);
  BoundTable& table = *table_ptr;
  const MixSetup s = make_setup(n, model, quad);
  const XWindow w = x_window(n, s.p_lo, s.p_hi);
  table.ensure_range(w.lo, w.hi);

  ErrorReport r;
  r.regime = Regime::LocalAverage;

  // Lower-bound error: sum over x of Pr(X = x, P < L(x)).
  {
    std::vector<std::int64_t> full;
    double acc = 0.0;
    for (std::int64_t x = w.lo; x <= w.hi; ++x) {
      const double L = table.lower(x);
      if (L <= s.p_lo) continue;
      if (L >= s.p_hi) {
        full.push_back(x);
        continue;
      }
      const double cut = logit(L);
      acc += sweep_panels(
          s.mu, s.sigma, s.t_lo, cut, s.h, s.nodes,
          [&](double t) { return pmf_at_logit(n, x, t); }, true, true);
    }
    const auto batch = runs_of(full);
    if (!batch.empty()) {
      acc += sweep_panels(
          s.mu, s.sigma, s.t_lo, s.t_hi, s.h, s.nodes,
          [&](double t) {
            const double p = inv_logit(t);
            double v = 0.0;
            for (const auto& run : batch) {
              v += binomial_tail_geq(run.first, n, p);
              if (run.second < n) v -= binomial_tail_geq(run.second + 1, n, p);
            }
            return v;
          },
          false, false);
    }
    r.alpha_l = acc;
  }

  // Upper-bound error: sum over x of Pr(X = x, P > U(x)).
  {
    std::vector<std::int64_t> full;
    double acc = 0.0;
    for (std::int64_t x = w.lo; x <= w.hi; ++x) {
      const double U = table.upper(x);
      if (U >= s.p_hi) continue;
      if (U <= s.p_lo) {
        full.push_back(x);
        continue;
      }
      const double cut = logit(U);
      acc += sweep_panels(
          s.mu, s.sigma, cut, s.t_hi, s.h, s.nodes,
          [&](double t) { return pmf_at_logit(n, x, t); }, false, true);
    }
    const auto batch = runs_of(full);
    if (!batch.empty()) {
      acc += sweep_panels(
          s.mu, s.sigma, s.t_lo, s.t_hi, s.h, s.nodes,
          [&](double t) {
            const double p = inv_logit(t);
            double v = 0.0;
            for (const auto& run : batch) {
              v += binomial_cdf(run.second, n, p);
              if (run.first > 0) v -= binomial_cdf(run.first - 1, n, p);
            }
            return v;
          },
          false, false);
    }
    r.alpha_u = acc;
  }
  return r;
}

HalfWidthReport local_average_half_widths(const MethodSpec& method, std::int64_t n,
                                          const RandomProportionModel& model,
                                          const ConfidenceSpec& conf,
                                          std::optional<Method> reference,
                                          const QuadratureSettings& quad) {
  auto widths_of = [&](const MethodSpec& m) {
    auto table_ptr = BoundTableCache::global().get(m, n, conf);
    BoundTable& table = *table_ptr;
    std::pair<double, double> out{0.0, 0.0};
    if (model.sigma == 0.0) {
      // Degenerate mixing: expectation under Binomial(n, p0) alone.
      const XWindow w = x_window(n, model.p0, model.p0);
      table.ensure_range(w.lo, w.hi);
      const double log_p = std::log(model.p0), log_1mp = std::log1p(-model.p0);
      for (std::int64_t x = w.lo; x <= w.hi; ++x) {
        double lp = log_binomial_coefficient(n, x);
        if (x > 0) lp += static_cast<double>(x) * log_p;
        if (x < n) lp += static_cast<double>(n - x) * log_1mp;
        const double pmf = std::exp(lp);
        const double ph = static_cast<double>(x) / static_cast<double>(n);
        out.first += (ph - table.lower(x)) * pmf;
        out.second += (table.upper(x) - ph) * pmf;
      }
      return out;
    }
    const MixSetup s = make_setup(n, model, quad);
    const XWindow w = x_window(n, s.p_lo, s.p_hi);
    table.ensure_range(w.lo, w.hi);
    for (std::int64_t x = w.lo; x <= w.hi; ++x) {
      const double e = expected_pmf(s, n, x);
      const double ph = static_cast<double>(x) / static_cast<double>(n);
      out.first += (ph - table.lower(x)) * e;
      out.second += (table.upper(x) - ph) * e;
    }
    return out;
  };

  HalfWidthReport rep;
  const auto own = widths_of(method);
  rep.w_l = own.first;
  rep.w_u = own.second;
  if (reference) {
    rep.relative_to = reference;
    MethodSpec ref_spec(*reference);
    ref_spec.wilson_small_x_level = method.wilson_small_x_level;
    const auto ref = *reference == method.id ? own : widths_of(ref_spec);
    rep.ratio_l = ref.first > 0.0 ? rep.w_l / ref.first : 0.0;
    rep.ratio_u = ref.second > 0.0 ? rep.w_u / ref.second : 0.0;
  }
  return rep;
}

ErrorReport random_size_errors(const MethodSpec& method,
                               const RandomSampleSizeModel& model,
                               const ConfidenceSpec& conf) {
  if (model.n_center < 1) {
    throw std::invalid_argument("random_size_errors: n_center must be >= 1");
  }
  if (!(model.p > 0.0 && model.p < 1.0)) {
    throw std::invalid_argument("random_size_errors: p outside (0, 1)");
  }
  if (model.sigma_n == 0.0) {
    ErrorReport r = conditional_errors(method, model.n_center, model.p, conf);
    r.regime = Regime::RandomSize;
    return r;
  }
  const double nc = static_cast<double>(model.n_center);
  const double span = 6.6 * model.sigma_n;
  const std::int64_t k_lo = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::floor(nc * std::exp(-span))));
  const std::int64_t k_hi = std::max(
      k_lo, static_cast<std::int64_t>(std::ceil(nc * std::exp(span))));
  ErrorReport r;
  r.regime = Regime::RandomSize;
  for (std::int64_t k = k_lo; k <= k_hi; ++k) {
    double weight;
    const double z_hi = std::log((static_cast<double>(k) + 0.5) / nc) / model.sigma_n;
    if (k == k_lo) {
      weight = normal_cdf(z_hi);
    } else if (k == k_hi) {
      weight = 1.0 - normal_cdf(std::log((static_cast<double>(k) - 0.5) / nc) /
                                model.sigma_n);
    } else {
      const double z_lo =
          std::log((static_cast<double>(k) - 0.5) / nc) / model.sigma_n;
      weight = normal_cdf(z_hi) - normal_cdf(z_lo);
    }
    if (weight < 1e-14) continue;
    const ErrorReport c = conditional_errors(method, k, model.p, conf);
    r.alpha_l += weight * c.alpha_l;
    r.alpha_u += weight * c.alpha_u;
  }
  return r;
}

std::vector<double> EvaluationGrid::log_spaced(double lo, double hi, int count) {
  if (!(lo > 0.0 && hi > lo) || count < 1) {
    throw std::invalid_argument("EvaluationGrid: bad log-spaced range");
  }
  std::vector<double> v(static_cast<std::size_t>(count));
  if (count == 1) {
    v[0] = lo;
    return v;
  }
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < count; ++i) {
    v[static_cast<std::size_t>(i)] =
        std::exp(llo + (lhi - llo) * static_cast<double>(i) / (count - 1));
  }
  return v;
}

EvaluationGrid EvaluationGrid::defaults() {
  EvaluationGrid g;
  g.lambda_values = log_spaced(0.05, 100.0, 400);
  return g;
}

std::vector<CurvePoint> error_curve(const MethodSpec& method,
                                    const EvaluationGrid& grid, Regime regime,
                                    const CurveOptions& options) {
  const ConfidenceSpec conf(grid.alpha);
  std::vector<CurvePoint> points;
  for (std::int64_t n : grid.sample_sizes) {
    for (double lambda : grid.lambda_values) {
      if (!(lambda / static_cast<double>(n) < 1.0)) continue;
      CurvePoint pt;
      pt.n = n;
      pt.lambda = lambda;
      pt.p0 = lambda / static_cast<double>(n);
      points.push_back(pt);
    }
  }
  std::sort(points.begin(), points.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.n != b.n ? a.n < b.n : a.lambda < b.lambda;
  });
  parallel_for(points.size(), [&](std::size_t i) {
    CurvePoint& pt = points[i];
    switch (regime) {
      case Regime::Conditional:
        pt.errors = conditional_errors(method, pt.n, pt.p0, conf);
        break;
      case Regime::LocalAverage: {
        const auto model = RandomProportionModel::calibrated(pt.p0, grid.or_s);
        pt.errors = local_average_errors(method, pt.n, model, conf, options.quad);
        break;
      }
      case Regime::RandomSize: {
        RandomSampleSizeModel model;
        model.n_center = pt.n;
        model.sigma_n = std::log(grid.or_s);
        model.p = pt.p0;
        pt.errors = random_size_errors(method, model, conf);
        break;
      }
    }
    if (options.with_widths) {
      const auto model = RandomProportionModel::calibrated(pt.p0, grid.or_s);
      pt.widths = local_average_half_widths(method, pt.n, model, conf,
                                            options.width_reference, options.quad);
    }
  });
  return points;
}

ScanResult max_error_scan(const MethodSpec& method, const EvaluationGrid& grid,
                          Regime regime) {
  const ConfidenceSpec conf(grid.alpha);
  ScanResult best;
  auto consider = (
      [&best](double err, char side, std::int64_t n, double lambda, double p) {
        if (err > best.max_error) {
          best.max_error = err;
          best.side = side;
          best.n = n;
          best.lambda = lambda;
          best.p = p;
        }
      });
  const auto points = error_curve(method, grid, regime);
  for (const auto& pt : points) {
    consider(pt.errors.alpha_l, 'L', pt.n, pt.lambda, pt.p0);
    consider(pt.errors.alpha_u, 'U', pt.n, pt.lambda, pt.p0);
  }
  if (regime != Regime::Conditional || grid.lambda_values.empty()) return best;

  // Conditional errors jump exactly at the bound values; probe just past each
  // discontinuity so the max tracks the supremum.
  const auto [lam_min, lam_max] = std::minmax_element(grid.lambda_values.begin(),
                                                      grid.lambda_values.end());
  for (std::int64_t n : grid.sample_sizes) {
    const double p_min = *lam_min / static_cast<double>(n);
    const double p_max = std::min(*lam_max / static_cast<double>(n), 1.0 - 1e-12);
    if (!(p_min < p_max)) continue;
    auto table_ptr = BoundTableCache::global().get(method, n, conf);
    BoundTable& table = *table_ptr;
    const double m_hi = static_cast<double>(n) * p_max;
    const std::int64_t x_hi = std::min<std::int64_t>(
        n, static_cast<std::int64_t>(
               std::ceil(m_hi + 12.0 * std::sqrt(m_hi * (1.0 - p_max)) + 50.0)));
    table.ensure_range(0, x_hi);
    std::vector<double> probes;
    for (std::int64_t x = 0; x <= x_hi; ++x) {
      const double L = table.lower(x);
      if (L > p_min && L <= p_max) probes.push_back(L - 1e-9);
      const double U = table.upper(x);
      if (U >= p_min && U < p_max) probes.push_back(U + 1e-9);
    }
    for (double p : probes) {
      if (!(p > 0.0 && p < 1.0)) continue;
      const ErrorReport e = conditional_errors(table, p);
      consider(e.alpha_l, 'L', n, p * static_cast<double>(n), p);
      consider(e.alpha_u, 'U', n, p * static_cast<double>(n), p);
    }
  }
  return best;
}

ValidityReport wald_validity_check(std::int64_t threshold,
                                   const ConfidenceSpec& conf,
                                   const EvaluationGrid& grid) {
  if (threshold < 0) {
    throw std::invalid_argument("wald_validity_check: threshold must be >= 0");
  }
  struct Cell {
    std::int64_t n;
    double lambda;
    bool used = false;
    ErrorReport errors;
  };
  std::vector<Cell> cells;
  for (std::int64_t n : grid.sample_sizes) {
    for (double lambda : grid.lambda_values) {
      if (!(lambda / static_cast<double>(n) < 1.0)) continue;
      cells.push_back(Cell{n, lambda, false, {}});
    }
  }
  const MethodSpec wald(Method::Wald);
  QuadratureSettings quad;
  parallel_for(cells.size(), [&](std::size_t i) {
    Cell& c = cells[i];
    const double p0 = c.lambda / static_cast<double>(c.n);
    const auto model = RandomProportionModel::calibrated(p0, grid.or_s);
    const MixSetup s = make_setup(c.n, model, quad);
    // Pr(min(X, n - X) <= threshold) under the mixing model.
    const double prob = sweep_panels(
        s.mu, s.sigma, s.t_lo, s.t_hi, s.h, s.nodes,
        [&](double t) {
          const double p = inv_logit(t);
          double v = binomial_cdf(threshold, c.n, p);
          if (c.n - threshold >= 0) {
            v += c.n - threshold > c.n ? 1.0
                                       : binomial_tail_geq(c.n - threshold, c.n, p);
          }
          return std::min(1.0, v);
        },
        false, false);
    if (prob >= 1e-6) return;
    c.used = true;
    c.errors = local_average_errors(wald, c.n, model, conf, quad);
  });

  ValidityReport rep;
  rep.limit = 1.5 * (0.5 * conf.alpha);
  for (const auto& c : cells) {
    if (!c.used) continue;
    ++rep.points_used;
    const double worst = std::max(c.errors.alpha_l, c.errors.alpha_u);
    if (worst > rep.max_error) {
      rep.max_error = worst;
      rep.n_at_max = c.n;
      rep.lambda_at_max = c.lambda;
      rep.side = c.errors.alpha_l >= c.errors.alpha_u ? 'L' : 'U';
    }
  }
  if (rep.points_used == 0) {
    throw std::runtime_error(
        "wald_validity_check: no grid point satisfies the sample-size "
        "qualification; enlarge the lambda grid or lower the threshold");
  }
  rep.pass = rep.max_error <= rep.limit;
  return rep;
}

ErrorReport monte_carlo_oracle(const MethodSpec& method, std::int64_t n,
                               const RandomProportionModel& model,
                               const ConfidenceSpec& conf, std::int64_t draws,
                               std::uint64_t seed) {
  if (draws < 100000) {
    throw std::invalid_argument("monte_carlo_oracle: need at least 1e5 draws");
  }
  auto table_ptr = BoundTableCache::global().get(method, n, conf);
  BoundTable& table = *table_ptr;
  table.ensure_all();
  std::vector<TailCounts> chunks(kOracleChunks);
  parallel_for(kOracleChunks, [&](std::size_t c) {
    TailCounts& tc = chunks[c];
    tc.draws = draws / kOracleChunks +
               (static_cast<std::int64_t>(c) < draws % kOracleChunks ? 1 : 0);
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (c + 1)));
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::int64_t i = 0; i < tc.draws; ++i) {
      const double t = model.mu + model.sigma * gauss(rng);
      const double p = inv_logit(t);
      const std::int64_t x = binomial_draw(n, p, unif(rng));
      if (table.lower(x) > p) ++tc.below;
      if (table.upper(x) < p) ++tc.above;
    }
  });
  TailCounts total;
  for (const auto& tc : chunks) {
    total.below += tc.below;
    total.above += tc.above;
    total.draws += tc.draws;
  }
  ErrorReport r = report_from_counts(total, Regime::LocalAverage);
  return r;
}

ErrorReport monte_carlo_oracle(const MethodSpec& method,
                               const RandomSampleSizeModel& model,
                               const ConfidenceSpec& conf, std::int64_t draws,
                               std::uint64_t seed) {
  if (draws < 100000) {
    throw std::invalid_argument("monte_carlo_oracle: need at least 1e5 draws");
  }
  const double nc = static_cast<double>(model.n_center);
  const double span = 6.6 * std::max(model.sigma_n, 1e-12);
  const std::int64_t k_lo = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::floor(nc * std::exp(-span))));
  const std::int64_t k_hi = std::max(
      k_lo, static_cast<std::int64_t>(std::ceil(nc * std::exp(span))));
  std::vector<std::shared_ptr<BoundTable>> tables;
  tables.reserve(static_cast<std::size_t>(k_hi - k_lo + 1));
  for (std::int64_t k = k_lo; k <= k_hi; ++k) {
    auto t = BoundTableCache::global().get(method, k, conf);
    t->ensure_all();
    tables.push_back(std::move(t));
  }
  std::vector<TailCounts> chunks(kOracleChunks);
  parallel_for(kOracleChunks, [&](std::size_t c) {
    TailCounts& tc = chunks[c];
    tc.draws = draws / kOracleChunks +
               (static_cast<std::int64_t>(c) < draws % kOracleChunks ? 1 : 0);
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (c + 1)));
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::int64_t i = 0; i < tc.draws; ++i) {
      std::int64_t k = model.n_center;
      if (model.sigma_n > 0.0) {
        k = std::llround(nc * std::exp(model.sigma_n * gauss(rng)));
        k = std::clamp(k, k_lo, k_hi);
      }
      BoundTable& table = *tables[static_cast<std::size_t>(k - k_lo)];
      const std::int64_t x = binomial_draw(k, model.p, unif(rng));
      if (table.lower(x) > model.p) ++tc.below;
      if (table.upper(x) < model.p) ++tc.above;
    }
  });
  TailCounts total;
  for (const auto& tc : chunks) {
    total.below += tc.below;
    total.above += tc.above;
    total.draws += tc.draws;
  }
  ErrorReport r = report_from_counts(total, Regime::RandomSize);
  return r;
}

}  // namespace propci::evaluation
