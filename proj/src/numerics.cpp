#include "propci/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>

namespace propci::numerics {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kSqrt2 = 1.41421356237309504880168872420969808;

[[noreturn]] void domain_error(const std::string& what) {
  throw std::invalid_argument("propci::numerics: " + what);
}

// Log-factorial table accumulated in long double; glibc lgamma alone loses
// too much absolute precision near n ~ 2000 for the pmf-sum invariants.
const std::vector<double>& log_factorial_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t(1 << 16);
    long double acc = 0.0L;
    t[0] = 0.0;
    for (std::size_t k = 1; k < t.size(); ++k) {
      acc += std::log(static_cast<long double>(k));
      t[k] = static_cast<double>(acc);
    }
    return t;
  }();
  return table;
}

double log_factorial(std::int64_t k) {
  const auto& t = log_factorial_table();
  if (k < static_cast<std::int64_t>(t.size())) return t[static_cast<std::size_t>(k)];
  return std::lgamma(static_cast<double>(k) + 1.0);
}

double log_choose(std::int64_t n, std::int64_t x) {
  return log_factorial(n) - log_factorial(x) - log_factorial(n - x);
}

// Continued fraction for the incomplete beta (modified Lentz).
double inc_beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 400; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

// Series for the regularized lower incomplete gamma, x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 1000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for the regularized upper incomplete gamma, x >= a + 1.
double gamma_q_cf(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Acklam's rational approximation to the inverse normal CDF; refined below
// with a Halley step off erfc, good to ~1e-15.
double norm_quantile_estimate(double q) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  if (q < p_low) {
    const double u = std::sqrt(-2.0 * std::log(q));
    return (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
           ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
  }
  const double r = q - 0.5, s = r * r;
  return (((((a[0] * s + a[1]) * s + a[2]) * s + a[3]) * s + a[4]) * s + a[5]) * r /
         (((((b[0] * s + b[1]) * s + b[2]) * s + b[3]) * s + b[4]) * s + 1.0);
}

}  // namespace

void Tolerance::validate() const {
  if (!(abs_p > 0.0) || !(abs_prob > 0.0)) domain_error("tolerances must be positive");
  if (max_iter < 1) domain_error("max_iter must be >= 1");
}

double log_binomial_coefficient(std::int64_t n, std::int64_t x) {
  if (n < 0 || x < 0 || x > n) domain_error("log_binomial_coefficient: x outside [0, n]");
  return log_choose(n, x);
}

double log_binomial_pmf(std::int64_t x, std::int64_t n, double p) {
  if (n < 1) domain_error("log_binomial_pmf: n must be >= 1");
  if (x < 0 || x > n) domain_error("log_binomial_pmf: x outside [0, n]");
  if (!(p >= 0.0 && p <= 1.0)) domain_error("log_binomial_pmf: p outside [0, 1]");
  const double neg_inf = -std::numeric_limits<double>::infinity();
  if (p == 0.0) return x == 0 ? 0.0 : neg_inf;
  if (p == 1.0) return x == n ? 0.0 : neg_inf;
  double lp = log_choose(n, x);
  if (x > 0) lp += static_cast<double>(x) * std::log(p);
  if (x < n) lp += static_cast<double>(n - x) * std::log1p(-p);
  return lp;
}

double binomial_pmf(std::int64_t x, std::int64_t n, double p) {
  return std::exp(log_binomial_pmf(x, n, p));
}

double binomial_tail_geq(std::int64_t x, std::int64_t n, double p) {
  if (n < 1) domain_error("binomial_tail_geq: n must be >= 1");
  if (x > n) domain_error("binomial_tail_geq: x > n");
  if (!(p >= 0.0 && p <= 1.0)) domain_error("binomial_tail_geq: p outside [0, 1]");
  if (x <= 0) return 1.0;
  return reg_inc_beta(static_cast<double>(x), static_cast<double>(n - x + 1), p);
}

double binomial_cdf(std::int64_t x, std::int64_t n, double p) {
  if (x < 0) return 0.0;
  if (x >= n) return 1.0;
  // Pr(X <= x) = I_{1-p}(n-x, x+1)
  return reg_inc_beta(static_cast<double>(n - x), static_cast<double>(x + 1), 1.0 - p);
}

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

double reg_inc_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) domain_error("reg_inc_beta: shapes must be positive");
  if (!(x >= 0.0 && x <= 1.0)) domain_error("reg_inc_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double front =
      std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * inc_beta_cf(a, b, x) / a;
  }
  return 1.0 - front * inc_beta_cf(b, a, 1.0 - x) / b;
}

double reg_inc_beta_inv(double a, double b, double q, const Tolerance& tol) {
  tol.validate();
  if (!(a > 0.0) || !(b > 0.0)) domain_error("reg_inc_beta_inv: shapes must be positive");
  if (!(q >= 0.0 && q <= 1.0)) domain_error("reg_inc_beta_inv: q outside [0, 1]");
  if (q == 0.0) return 0.0;
  if (q == 1.0) return 1.0;
  // Bisection with Newton polish (the beta density is the derivative).
  double lo = 0.0, hi = 1.0;
  double x = 0.5;
  for (int i = 0; i < 300; ++i) {
    const double f = reg_inc_beta(a, b, x) - q;
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    double next = x;
    if (x > 0.0 && x < 1.0) {
      const double logpdf =
          (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta(a, b);
      if (logpdf > -300.0) next = x - f / std::exp(logpdf);
    }
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo < 1e-16 * std::max(1.0, hi)) break;
    const double step = std::fabs(next - x);
    x = next;
    if (step < 1e-16 * std::max(x, 1e-300) && i > 3) break;
  }
  return x;
}

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

double normal_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) domain_error("normal_quantile: q outside (0, 1)");
  if (q == 0.5) return 0.0;
  // Evaluate on the lower half and mirror so that antisymmetry is exact.
  const bool flip = q > 0.5;
  const double ql = flip ? 1.0 - q : q;
  double z = norm_quantile_estimate(ql);
  // Halley refinement, two rounds.
  for (int i = 0; i < 2; ++i) {
    const double e = normal_cdf(z) - ql;
    const double u = e / normal_pdf(z);
    z -= u / (1.0 + 0.5 * z * u);
  }
  return flip ? -z : z;
}

double reg_lower_gamma(double a, double x) {
  if (!(a > 0.0)) domain_error("reg_lower_gamma: shape must be positive");
  if (x < 0.0) domain_error("reg_lower_gamma: x must be >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi_square_cdf(double x, double df) {
  if (!(df > 0.0)) domain_error("chi_square_cdf: df must be positive");
  if (x <= 0.0) return 0.0;
  return reg_lower_gamma(0.5 * df, 0.5 * x);
}

double chi_square_quantile(double q, double df, const Tolerance& tol) {
  tol.validate();
  if (!(df > 0.0)) domain_error("chi_square_quantile: df must be positive");
  if (!(q >= 0.0 && q < 1.0)) domain_error("chi_square_quantile: q outside [0, 1)");
  if (q == 0.0) return 0.0;
  double hi = df + 10.0 * std::sqrt(2.0 * df) + 10.0;
  while (chi_square_cdf(hi, df) < q) hi *= 2.0;
  double lo = 0.0, x = 0.5 * hi;
  for (int i = 0; i < 200; ++i) {
    const double f = chi_square_cdf(x, df) - q;
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    double next = x;
    if (x > 0.0) {
      const double logpdf = (0.5 * df - 1.0) * std::log(0.5 * x) - 0.5 * x -
                            std::lgamma(0.5 * df) - std::log(2.0);
      if (logpdf > -300.0) next = x - f / std::exp(logpdf);
    }
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo < 1e-14 * std::max(1.0, hi)) break;
    x = next;
  }
  return x;
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) domain_error("logit: p outside (0, 1)");
  return std::log(p) - std::log1p(-p);
}

double inv_logit(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double find_root_monotone(const std::function<double(double)>& f, double lo,
                          double hi, const Tolerance& tol) {
  tol.validate();
  if (!(lo < hi)) domain_error("find_root_monotone: empty bracket");
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) domain_error("find_root_monotone: bracket does not straddle the root");
  const bool increasing = fhi > 0.0;
  for (int i = 0; i < tol.max_iter; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= std::min(tol.abs_p, 1e-15 + 1e-12 * std::fabs(mid))) break;
    const double fm = f(mid);
    if ((fm > 0.0) == increasing) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double find_threshold_infimum(const std::function<double(double)>& f,
                              double threshold, double lo, double hi,
                              const Tolerance& tol) {
  tol.validate();
  if (!(lo <= hi)) domain_error("find_threshold_infimum: empty bracket");
  if (f(lo) > threshold) return lo;
  if (!(f(hi) > threshold)) return hi;
  // Invariant: f(lo) <= threshold < f(hi).
  for (int i = 0; i < tol.max_iter; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= std::min(tol.abs_p, 1e-15 + 1e-12 * std::fabs(mid))) break;
    if (f(mid) > threshold) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double QuadratureRule::sum_weights() const {
  double acc = 0.0, comp = 0.0;
  for (double w : weights) {
    const double term = w - comp;
    const double next = acc + term;
    comp = (next - acc) - term;
    acc = next;
  }
  return acc;
}

const GaussLegendreReference& gauss_legendre_reference(int m) {
  if (m < 1) domain_error("gauss_legendre_reference: m must be >= 1");
  static std::mutex mtx;
  static std::map<int, GaussLegendreReference> cache;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(m);
  if (it != cache.end()) return it->second;

  GaussLegendreReference ref;
  ref.nodes.resize(m);
  ref.weights.resize(m);
  // Newton iteration on the Legendre recurrence, symmetric pairs.
  const int half = (m + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (m + 0.5));
    double pp = 0.0;
    for (int it2 = 0; it2 < 100; ++it2) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < m; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = m * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / pp;
      z -= dz;
      if (std::fabs(dz) < 1e-15) break;
    }
    ref.nodes[i] = -z;
    ref.nodes[m - 1 - i] = z;
    const double w = 2.0 / ((1.0 - z * z) * pp * pp);
    ref.weights[i] = w;
    ref.weights[m - 1 - i] = w;
  }
  return cache.emplace(m, std::move(ref)).first->second;
}

QuadratureRule gauss_legendre_on_interval(double a, double b, int m) {
  if (!(a < b)) domain_error("gauss_legendre_on_interval: need a < b");
  const auto& ref = gauss_legendre_reference(m);
  QuadratureRule rule;
  rule.kind = RuleKind::GaussLegendreOnInterval;
  rule.nodes.resize(ref.nodes.size());
  rule.weights.resize(ref.weights.size());
  const double mid = 0.5 * (a + b), hw = 0.5 * (b - a);
  for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
    rule.nodes[i] = mid + hw * ref.nodes[i];
    rule.weights[i] = hw * ref.weights[i];
  }
  return rule;
}

QuadratureRule truncated_normal_quadrature(double mu, double sigma,
                                           double upper_cut, int m) {
  if (!(sigma > 0.0)) domain_error("truncated_normal_quadrature: sigma must be positive");
  if (m < 16) domain_error("truncated_normal_quadrature: m must be >= 16");
  const double a = mu - 8.0 * sigma;
  const double b = std::min(upper_cut, mu + 8.0 * sigma);
  QuadratureRule rule;
  rule.kind = RuleKind::TruncatedNormal;
  if (!(b > a)) return rule;  // empty range: zero rule
  rule = gauss_legendre_on_interval(a, b, m);
  rule.kind = RuleKind::TruncatedNormal;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    rule.weights[i] *= normal_pdf((rule.nodes[i] - mu) / sigma) / sigma;
  }
  return rule;
}

double normal_expectation(double mu, double sigma, double t_lo, double t_hi,
                          const std::function<double(double)>& g,
                          double max_panel_width, int nodes_per_panel) {
  if (!(sigma > 0.0)) domain_error("normal_expectation: sigma must be positive");
  if (!(max_panel_width > 0.0)) domain_error("normal_expectation: panel width must be positive");
  const double a = std::max(t_lo, mu - 8.0 * sigma);
  const double b = std::min(t_hi, mu + 8.0 * sigma);
  if (!(b > a)) return 0.0;
  const int panels = std::min<int>(
      100000, static_cast<int>(std::ceil((b - a) / max_panel_width)));
  const auto& ref = gauss_legendre_reference(nodes_per_panel);
  const double h = (b - a) / panels;
  double acc = 0.0, comp = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double pa = a + k * h;
    const double mid = pa + 0.5 * h, hw = 0.5 * h;
    for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
      const double t = mid + hw * ref.nodes[i];
      const double w = hw * ref.weights[i] * normal_pdf((t - mu) / sigma) / sigma;
      const double term = w * g(t) - comp;
      const double next = acc + term;
      comp = (next - acc) - term;
      acc = next;
    }
  }
  return acc;
}

}  // namespace propci::numerics
