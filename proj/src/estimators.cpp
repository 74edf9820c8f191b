#include "propci/estimators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace propci::estimators {

using numerics::binomial_cdf;
using numerics::binomial_tail_geq;
using numerics::chi_square_quantile;
using numerics::find_root_monotone;
using numerics::find_threshold_infimum;
using numerics::inv_logit;
using numerics::log_binomial_pmf;
using numerics::normal_quantile;
using numerics::reg_inc_beta;
using numerics::reg_inc_beta_inv;

namespace {

struct IdEntry {
  Method method;
  std::string_view id;
};

constexpr std::array<IdEntry, 15> kIds = {{
    {Method::Wald, "wald"},
    {Method::Wilson, "wilson"},
    {Method::WilsonModified, "wilson_modified"},
    {Method::ArcsineBartlett, "arcsine_bartlett"},
    {Method::WaldLogitModified, "wald_logit_modified"},
    {Method::LikelihoodRatioModified, "likelihood_ratio_modified"},
    {Method::JeffreysModified, "jeffreys_modified"},
    {Method::Blaker, "blaker"},
    {Method::ClopperPearson, "clopper_pearson"},
    {Method::ClopperPearsonMidP, "clopper_pearson_midp"},
    {Method::WaldCC, "wald_cc"},
    {Method::WilsonCC, "wilson_cc"},
    {Method::BootPercentile, "boot_percentile"},
    {Method::BootBasic, "boot_basic"},
    {Method::CompositeDellas, "composite_dellas"},
}};

bool is_direct_method(Method m) {
  return m == Method::BootPercentile || m == Method::BootBasic ||
         m == Method::CompositeDellas;
}

double wilson_lower_at(double x_eff, std::int64_t n, double kappa) {
  const double k2 = kappa * kappa;
  const double nn = static_cast<double>(n);
  const double disc = x_eff * (nn - x_eff) / nn + 0.25 * k2;
  return (x_eff + 0.5 * k2 - kappa * std::sqrt(std::max(0.0, disc))) / (nn + k2);
}

double wald_lower_raw(const BinomialSample& s, double kappa) {
  const double nn = static_cast<double>(s.n);
  const double half =
      kappa * std::sqrt(static_cast<double>(s.x) * static_cast<double>(s.n - s.x) / nn) / nn;
  return s.p_hat() - half;
}

double arcsine_lower(const BinomialSample& s, double kappa) {
  const double nn = static_cast<double>(s.n);
  const double arg = std::asin(std::sqrt((s.x + 0.5) / (nn + 1.0))) -
                     0.5 * kappa / std::sqrt(nn + 0.5);
  const double t = std::sin(std::max(0.0, arg));
  return t * t;
}

double wald_logit_lower(const BinomialSample& s, const ConfidenceSpec& conf) {
  if (s.x == 0) return 0.0;
  if (s.x == s.n) return std::pow(0.5 * conf.alpha, 1.0 / static_cast<double>(s.n));
  const double lx = std::log(static_cast<double>(s.x));
  const double lnx = std::log(static_cast<double>(s.n - s.x));
  const double se = std::sqrt(static_cast<double>(s.n) /
                              (static_cast<double>(s.x) * static_cast<double>(s.n - s.x)));
  return inv_logit(lx - lnx - conf.kappa * se);
}

// Deviance of q against the observed proportion; zero-exponent terms
// contribute nothing.
double lr_deviance(const BinomialSample& s, double q) {
  const double ln_n = std::log(static_cast<double>(s.n));
  double d = 0.0;
  if (s.x > 0) {
    d += static_cast<double>(s.x) *
         (std::log(static_cast<double>(s.x)) - ln_n - std::log(q));
  }
  if (s.x < s.n) {
    d += static_cast<double>(s.n - s.x) *
         (std::log(static_cast<double>(s.n - s.x)) - ln_n - std::log1p(-q));
  }
  return d;
}

double lr_lower(const BinomialSample& s, const ConfidenceSpec& conf,
                const Tolerance& tol) {
  if (s.x == 0) return 0.0;
  if (s.x == s.n) return std::pow(0.5 * conf.alpha, 1.0 / static_cast<double>(s.n));
  const double half_k2 = 0.5 * conf.kappa * conf.kappa;
  // Deviance decreases from +inf to 0 on (0, p_hat]; the bound is the first q
  // where it drops to half_k2.
  return find_threshold_infimum(
      [&](double q) { return q <= 0.0 ? -1e308 : -lr_deviance(s, q); }, -half_k2,
      1e-300, s.p_hat(), tol);
}

double midp_lower(const BinomialSample& s, const ConfidenceSpec& conf,
                  const Tolerance& tol) {
  if (s.x == 0) return 0.0;
  const std::int64_t x = s.x, n = s.n;
  // Pr(X >= x) - Pr(X = x)/2 as a smooth increasing function of q.
  auto midp_value = [&](double q) {
    if (q <= 0.0) return 0.0;
    if (q >= 1.0) return x == n ? 0.5 : 1.0;
    if (x == n) return 0.5 * std::pow(q, static_cast<double>(n));
    return 0.5 * (reg_inc_beta(static_cast<double>(x), static_cast<double>(n - x + 1), q) +
                  reg_inc_beta(static_cast<double>(x + 1), static_cast<double>(n - x), q));
  };
  return find_threshold_infimum(midp_value, 0.5 * conf.alpha, 0.0, 1.0, tol);
}

double clopper_pearson_lower(const BinomialSample& s, const ConfidenceSpec& conf,
                             const Tolerance& tol) {
  if (s.x == 0) return 0.0;
  return reg_inc_beta_inv(static_cast<double>(s.x),
                          static_cast<double>(s.n - s.x + 1), 0.5 * conf.alpha, tol);
}

double jeffreys_lower(const BinomialSample& s, const ConfidenceSpec& conf,
                      const Tolerance& tol) {
  if (s.x <= 1) return 0.0;
  if (s.x == s.n) return std::pow(0.5 * conf.alpha, 1.0 / static_cast<double>(s.n));
  return reg_inc_beta_inv(s.x + 0.5, static_cast<double>(s.n - s.x) + 0.5,
                          0.5 * conf.alpha, tol);
}

double wilson_modified_lower(const MethodSpec& m, const BinomialSample& s,
                             const ConfidenceSpec& conf, const Tolerance& tol) {
  const std::int64_t x_star = MethodSpec::wilson_x_star(s.n);
  if (s.x >= 1 && s.x <= x_star) {
    const double level = m.wilson_small_x_level == WilsonSmallXLevel::FullAlpha
                             ? conf.alpha
                             : 0.5 * conf.alpha;
    return chi_square_quantile(level, 2.0 * static_cast<double>(s.x), tol) /
           (2.0 * static_cast<double>(s.n));
  }
  return wilson_lower_at(static_cast<double>(s.x), s.n, conf.kappa);
}

double wald_cc_lower(const BinomialSample& s, const ConfidenceSpec& conf) {
  const double nn = static_cast<double>(s.n);
  const double ph = s.p_hat();
  return ph - (conf.kappa * std::sqrt(ph * (1.0 - ph) / nn) + 0.5 / nn);
}

double wilson_cc_lower(const BinomialSample& s, const ConfidenceSpec& conf) {
  if (s.x == 0) return 0.0;
  // Half-count shift applied to x before the score inversion.
  return wilson_lower_at(static_cast<double>(s.x) - 0.5, s.n, conf.kappa);
}

// Blaker lower bound. bpval is not monotone in q: as q rises toward p_hat the
// opposite-tail cutoff k*(q) = max{k : Pr(X <= k) <= Pr(X >= x)} steps upward,
// so bpval jumps at each k change and is first-decreasing-then-increasing in
// between (the two CDF derivatives cross at most once). We therefore walk the
// pieces in order and locate the first q where bpval exceeds alpha.
double blaker_lower(const BinomialSample& s, const ConfidenceSpec& conf,
                    const Tolerance& tol) {
  if (s.x == 0) return 0.0;
  const std::int64_t x = s.x, n = s.n;
  const double alpha = conf.alpha;
  const double lo = reg_inc_beta_inv(static_cast<double>(x),
                                     static_cast<double>(n - x + 1), 0.5 * alpha, tol);
  const double hi = reg_inc_beta_inv(static_cast<double>(x),
                                     static_cast<double>(n - x + 1), alpha, tol);
  if (!(hi > lo)) return hi;
  auto tail_x = [&](double q) { return binomial_tail_geq(x, n, q); };
  auto cdf_k = [&](std::int64_t k, double q) {
    return k < 0 ? 0.0 : binomial_cdf(k, n, q);
  };
  auto kstar = [&](double q) {
    const double t = tail_x(q);
    std::int64_t klo = -1, khi = x - 1;
    while (klo < khi) {
      const std::int64_t mid = klo + (khi - klo + 1) / 2;
      if (cdf_k(mid, q) <= t) {
        klo = mid;
      } else {
        khi = mid - 1;
      }
    }
    return klo;
  };
  const std::int64_t k_first = kstar(lo), k_last = kstar(hi);
  double piece_lo = lo;
  for (std::int64_t k = k_first; k <= k_last; ++k) {
    double piece_hi = hi;
    if (k < k_last) {
      piece_hi = find_root_monotone(
          [&](double q) { return tail_x(q) - cdf_k(k + 1, q); }, lo, hi, tol);
    }
    auto bp = [&](double q) { return tail_x(q) + cdf_k(k, q); };
    if (bp(piece_lo) > alpha) return piece_lo;
    if (bp(piece_hi) > alpha) {
      // Within a piece {bp > alpha} is a right-anchored interval, so plain
      // threshold bisection applies even though bp dips in the middle.
      return find_threshold_infimum(bp, alpha, piece_lo, piece_hi, tol);
    }
    piece_lo = piece_hi;
  }
  return hi;
}

}  // namespace

void BinomialSample::validate() const {
  if (n < 1) throw std::invalid_argument("BinomialSample: n must be >= 1");
  if (x < 0 || x > n) throw std::invalid_argument("BinomialSample: x outside [0, n]");
}

ConfidenceSpec::ConfidenceSpec(double alpha_) : alpha(alpha_) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("ConfidenceSpec: alpha outside (0, 1)");
  }
  kappa = normal_quantile(1.0 - 0.5 * alpha);
}

Interval Interval::from_raw(double point, double lower_raw, double upper_raw) {
  Interval iv;
  iv.point = point;
  iv.lower_raw = lower_raw;
  iv.upper_raw = upper_raw;
  const double lo = std::min(1.0, std::max(0.0, lower_raw));
  const double hi = std::min(1.0, std::max(0.0, upper_raw));
  iv.lower = std::min(lo, hi);
  iv.upper = std::max(lo, hi);
  return iv;
}

std::string_view method_id(Method m) {
  for (const auto& e : kIds) {
    if (e.method == m) return e.id;
  }
  throw std::logic_error("method_id: unknown method");
}

Method method_from_id(std::string_view id) {
  for (const auto& e : kIds) {
    if (e.id == id) return e.method;
  }
  throw std::invalid_argument("unknown method id: " + std::string(id));
}

const std::vector<Method>& method_catalog() {
  static const std::vector<Method> catalog = [] {
    std::vector<Method> v;
    for (const auto& e : kIds) v.push_back(e.method);
    return v;
  }();
  return catalog;
}

MethodProperties method_properties(Method m) {
  // {equivariant, analytic_solution, monotone_in_x, multivariate, deterministic}
  switch (m) {
    case Method::Wald:
      return {true, true, false, true, true};
    case Method::Wilson:
      return {true, true, true, false, true};
    case Method::WilsonModified:
      return {true, true, true, false, true};
    case Method::ArcsineBartlett:
      return {true, true, true, false, true};
    case Method::WaldLogitModified:
      return {true, true, true, true, true};
    case Method::LikelihoodRatioModified:
      return {true, false, true, true, true};
    case Method::JeffreysModified:
      return {true, true, false, false, true};
    case Method::Blaker:
      return {true, false, false, false, true};
    case Method::ClopperPearson:
      return {true, true, true, true, true};
    case Method::ClopperPearsonMidP:
      return {true, false, true, true, true};
    case Method::WaldCC:
      return {true, true, false, false, true};
    case Method::WilsonCC:
      return {true, true, true, false, true};
    case Method::BootPercentile:
      return {true, false, false, false, true};  // quantile plateaus break strictness
    case Method::BootBasic:
      return {true, false, false, false, true};
    case Method::CompositeDellas:
      return {true, false, false, false, true};
  }
  throw std::logic_error("method_properties: unknown method");
}

double lower_bound(const MethodSpec& method, const BinomialSample& sample,
                   const ConfidenceSpec& conf, const Tolerance& tol) {
  sample.validate();
  switch (method.id) {
    case Method::Wald:
      return wald_lower_raw(sample, conf.kappa);
    case Method::Wilson:
      return wilson_lower_at(static_cast<double>(sample.x), sample.n, conf.kappa);
    case Method::WilsonModified:
      return wilson_modified_lower(method, sample, conf, tol);
    case Method::ArcsineBartlett:
      return arcsine_lower(sample, conf.kappa);
    case Method::WaldLogitModified:
      return wald_logit_lower(sample, conf);
    case Method::LikelihoodRatioModified:
      return lr_lower(sample, conf, tol);
    case Method::JeffreysModified:
      return jeffreys_lower(sample, conf, tol);
    case Method::Blaker:
      return blaker_lower(sample, conf, tol);
    case Method::ClopperPearson:
      return clopper_pearson_lower(sample, conf, tol);
    case Method::ClopperPearsonMidP:
      return midp_lower(sample, conf, tol);
    case Method::WaldCC:
      return wald_cc_lower(sample, conf);
    case Method::WilsonCC:
      return wilson_cc_lower(sample, conf);
    case Method::BootPercentile:
      return bootstrap_interval(BootstrapKind::Percentile, sample, conf).lower_raw;
    case Method::BootBasic:
      return bootstrap_interval(BootstrapKind::Basic, sample, conf).lower_raw;
    case Method::CompositeDellas:
      return composite_dellas_interval(sample, conf).lower_raw;
  }
  throw std::logic_error("lower_bound: unknown method");
}

Interval interval(const MethodSpec& method, const BinomialSample& sample,
                  const ConfidenceSpec& conf, const Tolerance& tol) {
  sample.validate();
  switch (method.id) {
    case Method::BootPercentile:
      return bootstrap_interval(BootstrapKind::Percentile, sample, conf);
    case Method::BootBasic:
      return bootstrap_interval(BootstrapKind::Basic, sample, conf);
    case Method::CompositeDellas:
      return composite_dellas_interval(sample, conf);
    default:
      break;
  }
  const double lo = lower_bound(method, sample, conf, tol);
  const BinomialSample mirror{sample.n - sample.x, sample.n};
  const double up = 1.0 - lower_bound(method, mirror, conf, tol);
  return Interval::from_raw(sample.p_hat(), lo, up);
}

double blaker_pvalue(double p, const BinomialSample& sample) {
  sample.validate();
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("blaker_pvalue: p outside [0, 1]");
  }
  const std::int64_t x = sample.x, n = sample.n;
  if (p < sample.p_hat()) {
    return blaker_pvalue(1.0 - p, BinomialSample{n - x, n});
  }
  const double main = binomial_cdf(x, n, p);
  // smallest x' with Pr(X >= x') <= Pr(X <= x); x' = n + 1 means no upper tail
  std::int64_t lo = 0, hi = n + 1;
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    const double t = mid > n ? 0.0 : binomial_tail_geq(mid, n, p);
    if (t <= main) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  if (lo <= x) return 1.0;  // the two tails meet: full acceptance mass
  const double tail = lo > n ? 0.0 : binomial_tail_geq(lo, n, p);
  return std::min(1.0, main + tail);
}

BootstrapDistribution bootstrap_distribution(const BinomialSample& sample) {
  sample.validate();
  BootstrapDistribution d;
  d.n = sample.n;
  const std::size_t size = static_cast<std::size_t>(sample.n) + 1;
  d.pmf.assign(size, 0.0);
  d.cdf.assign(size, 0.0);
  if (sample.x == 0 || sample.x == sample.n) {
    const std::size_t at = sample.x == 0 ? 0 : size - 1;
    d.pmf[at] = 1.0;
    for (std::size_t k = at; k < size; ++k) d.cdf[k] = 1.0;
    return d;
  }
  // log p_hat and log(1 - p_hat) from the integer counts keeps the law of the
  // mirrored sample bit-identical under k <-> n-k.
  const double log_p = std::log(static_cast<double>(sample.x)) -
                       std::log(static_cast<double>(sample.n));
  const double log_q = std::log(static_cast<double>(sample.n - sample.x)) -
                       std::log(static_cast<double>(sample.n));
  double acc = 0.0, comp = 0.0;
  for (std::int64_t k = 0; k <= sample.n; ++k) {
    double l = numerics::log_binomial_coefficient(sample.n, k);
    if (k > 0) l += static_cast<double>(k) * log_p;
    if (k < sample.n) l += static_cast<double>(sample.n - k) * log_q;
    const double prob = std::exp(l);
    d.pmf[static_cast<std::size_t>(k)] = prob;
    const double term = prob - comp;
    const double next = acc + term;
    comp = (next - acc) - term;
    acc = next;
    d.cdf[static_cast<std::size_t>(k)] = acc;
  }
  return d;
}

double BootstrapDistribution::quantile(double level) const {
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), level);
  const std::size_t k = it == cdf.end() ? cdf.size() - 1
                                        : static_cast<std::size_t>(it - cdf.begin());
  return static_cast<double>(k) / static_cast<double>(n);
}

Interval bootstrap_interval(BootstrapKind kind, const BinomialSample& sample,
                            const ConfidenceSpec& conf) {
  const BootstrapDistribution d = bootstrap_distribution(sample);
  const double q_lo = d.quantile(0.5 * conf.alpha);
  const double q_hi = d.quantile(1.0 - 0.5 * conf.alpha);
  const double ph = sample.p_hat();
  if (kind == BootstrapKind::Percentile) {
    return Interval::from_raw(ph, q_lo, q_hi);
  }
  return Interval::from_raw(ph, 2.0 * ph - q_hi, 2.0 * ph - q_lo);
}

Interval composite_dellas_interval(const BinomialSample& sample,
                                   const ConfidenceSpec& conf) {
  if (sample.x == 0 || sample.x == sample.n) {
    return interval(MethodSpec{Method::ClopperPearson}, sample, conf);
  }
  return bootstrap_interval(BootstrapKind::Percentile, sample, conf);
}

Interval continuity_corrected_interval(CorrectedKind kind,
                                       const BinomialSample& sample,
                                       const ConfidenceSpec& conf) {
  const Method m = kind == CorrectedKind::WaldCC ? Method::WaldCC : Method::WilsonCC;
  return interval(MethodSpec{m}, sample, conf);
}

BoundTable::BoundTable(const MethodSpec& method, std::int64_t n,
                       const ConfidenceSpec& conf)
    : method_(method), n_(n), conf_(conf) {
  if (n < 1) throw std::invalid_argument("BoundTable: n must be >= 1");
  const std::size_t size = static_cast<std::size_t>(n) + 1;
  lower_raw_.assign(size, 0.0);
  upper_raw_.assign(size, 0.0);
  lower_.assign(size, 0.0);
  upper_.assign(size, 0.0);
  have_.assign(size, 0);
  lb_.assign(size, 0.0);
  lb_have_.assign(size, 0);
}

void BoundTable::ensure_range(std::int64_t xlo, std::int64_t xhi) {
  xlo = std::max<std::int64_t>(0, xlo);
  xhi = std::min(n_, xhi);
  if (xlo > xhi) return;
  std::lock_guard<std::mutex> lock(mutex_);
  for (std::int64_t x = xlo; x <= xhi; ++x) {
    if (!have_[static_cast<std::size_t>(x)]) compute_locked(x);
  }
}

double BoundTable::lb_locked(std::int64_t x) {
  const std::size_t i = static_cast<std::size_t>(x);
  if (!lb_have_[i]) {
    lb_[i] = estimators::lower_bound(method_, BinomialSample{x, n_}, conf_);
    lb_have_[i] = 1;
  }
  return lb_[i];
}

void BoundTable::compute_locked(std::int64_t x) {
  const std::size_t i = static_cast<std::size_t>(x);
  Interval iv;
  if (is_direct_method(method_.id)) {
    iv = estimators::interval(method_, BinomialSample{x, n_}, conf_);
  } else {
    const double lo = lb_locked(x);
    const double up = 1.0 - lb_locked(n_ - x);
    iv = Interval::from_raw(static_cast<double>(x) / static_cast<double>(n_), lo, up);
  }
  lower_raw_[i] = iv.lower_raw;
  upper_raw_[i] = iv.upper_raw;
  lower_[i] = iv.lower;
  upper_[i] = iv.upper;
  have_[i] = 1;
}

std::shared_ptr<BoundTable> BoundTableCache::get(const MethodSpec& method,
                                                 std::int64_t n,
                                                 const ConfidenceSpec& conf) {
  const auto key = std::make_tuple(
      method.id, static_cast<int>(method.wilson_small_x_level), n, conf.alpha);
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = tables_.find(key);
  if (it != tables_.end()) return it->second;
  auto table = std::make_shared<BoundTable>(method, n, conf);
  tables_.emplace(key, table);
  return table;
}

void BoundTableCache::clear() {
  std::lock_guard<std::mutex> lock(mutex_);
  tables_.clear();
}

BoundTableCache& BoundTableCache::global() {
  static BoundTableCache cache;
  return cache;
}

}  // namespace propci::estimators
