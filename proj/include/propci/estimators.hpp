#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "propci/numerics.hpp"

// Confidence-interval estimators for a binomial proportion. Each method is
// defined through its lower bound; the upper bound follows by equivariance
// U(x, n) = 1 - L(n - x, n) except for the bootstrap-based methods, which
// compute both bounds directly (and are equivariant by construction).
// Bounds falling outside [0, 1] are clamped to the nearest valid proportion.
namespace propci::estimators {

using numerics::Tolerance;

struct BinomialSample {
  std::int64_t x = 0;  // success count, 0 <= x <= n
  std::int64_t n = 1;  // trial count, n >= 1

  double p_hat() const { return static_cast<double>(x) / static_cast<double>(n); }
  void validate() const;
};

struct ConfidenceSpec {
  double alpha;  // two-sided nominal error, 0 < alpha < 1
  double kappa;  // z_{1 - alpha/2}, always derived from alpha

  explicit ConfidenceSpec(double alpha_);
};

struct Interval {
  double point = 0.0;
  double lower_raw = 0.0;  // possibly outside [0, 1]
  double upper_raw = 0.0;
  double lower = 0.0;  // clamped to [0, 1]
  double upper = 0.0;

  static Interval from_raw(double point, double lower_raw, double upper_raw);
};

enum class Method {
  Wald,
  Wilson,
  WilsonModified,
  ArcsineBartlett,
  WaldLogitModified,
  LikelihoodRatioModified,
  JeffreysModified,
  Blaker,
  ClopperPearson,
  ClopperPearsonMidP,
  WaldCC,
  WilsonCC,
  BootPercentile,
  BootBasic,
  CompositeDellas,
};

std::string_view method_id(Method m);
Method method_from_id(std::string_view id);  // throws on unknown id
const std::vector<Method>& method_catalog();

// Quantile level of the chi-square branch used by the modified Wilson lower
// bound for 1 <= x <= x*. FullAlpha matches the published definition; the
// HalfAlpha variant matches the exact one-sided Poisson bound instead.
enum class WilsonSmallXLevel { FullAlpha, HalfAlpha };

struct MethodSpec {
  Method id = Method::ClopperPearsonMidP;
  WilsonSmallXLevel wilson_small_x_level = WilsonSmallXLevel::FullAlpha;

  MethodSpec() = default;
  MethodSpec(Method m) : id(m) {}  // NOLINT: implicit by design

  // Small-count threshold of the modified Wilson branch.
  static std::int64_t wilson_x_star(std::int64_t n) { return n <= 50 ? 2 : 3; }
};

struct MethodProperties {
  bool equivariant;
  bool analytic_solution;
  bool monotone_in_x;
  bool generalizes_multivariate;
  bool deterministic;
};

MethodProperties method_properties(Method m);

// Raw (unclamped) lower bound. Total for every catalog method; degenerate
// branches at x = 0 return 0. Search-defined bounds (Blaker, mid-P,
// likelihood ratio) are resolved to tol.abs_p or better.
double lower_bound(const MethodSpec& method, const BinomialSample& sample,
                   const ConfidenceSpec& conf, const Tolerance& tol = {});

Interval interval(const MethodSpec& method, const BinomialSample& sample,
                  const ConfidenceSpec& conf, const Tolerance& tol = {});

// Blaker's two-sided acceptance p-value, as defined for the test inversion.
double blaker_pvalue(double p, const BinomialSample& sample);

// Exact resampling law of the nonparametric bootstrap: X* ~ Binomial(n, x/n),
// fully enumerated (point mass at 0 or n when x is 0 or n).
struct BootstrapDistribution {
  std::int64_t n = 0;
  std::vector<double> pmf;  // index k = resampled success count
  std::vector<double> cdf;

  // Smallest k with Pr(X* <= k) >= level, as a proportion k/n.
  double quantile(double level) const;
};

BootstrapDistribution bootstrap_distribution(const BinomialSample& sample);

enum class BootstrapKind { Percentile, Basic };
Interval bootstrap_interval(BootstrapKind kind, const BinomialSample& sample,
                            const ConfidenceSpec& conf);

// Percentile bootstrap with the Clopper-Pearson interval substituted at the
// degenerate resampling cases x = 0 and x = n.
Interval composite_dellas_interval(const BinomialSample& sample,
                                   const ConfidenceSpec& conf);

enum class CorrectedKind { WaldCC, WilsonCC };
Interval continuity_corrected_interval(CorrectedKind kind,
                                       const BinomialSample& sample,
                                       const ConfidenceSpec& conf);

// Per-(method, n, alpha) bound table, filled lazily and cached. The
// evaluation module reads these millions of times; entries are immutable
// once computed.
class BoundTable {
 public:
  BoundTable(const MethodSpec& method, std::int64_t n, const ConfidenceSpec& conf);

  std::int64_t n() const { return n_; }
  const MethodSpec& method() const { return method_; }
  const ConfidenceSpec& conf() const { return conf_; }

  // Make [xlo, xhi] (inclusive) available; thread-safe.
  void ensure_range(std::int64_t xlo, std::int64_t xhi);
  void ensure_all() { ensure_range(0, n_); }

  // Clamped bounds; caller must have ensured coverage of x.
  double lower(std::int64_t x) const { return lower_[static_cast<std::size_t>(x)]; }
  double upper(std::int64_t x) const { return upper_[static_cast<std::size_t>(x)]; }
  double lower_raw(std::int64_t x) const { return lower_raw_[static_cast<std::size_t>(x)]; }
  double upper_raw(std::int64_t x) const { return upper_raw_[static_cast<std::size_t>(x)]; }

 private:
  void compute_locked(std::int64_t x);
  double lb_locked(std::int64_t x);  // raw lower bound, memoized

  MethodSpec method_;
  std::int64_t n_;
  ConfidenceSpec conf_;
  std::vector<double> lower_raw_, upper_raw_, lower_, upper_;
  std::vector<double> lb_;
  std::vector<char> have_, lb_have_;
  std::mutex mutex_;
};

class BoundTableCache {
 public:
  std::shared_ptr<BoundTable> get(const MethodSpec& method, std::int64_t n,
                                  const ConfidenceSpec& conf);
  void clear();
  static BoundTableCache& global();

 private:
  std::mutex mutex_;
  std::map<std::tuple<Method, int, std::int64_t, double>,
           std::shared_ptr<BoundTable>>
      tables_;
};

}  // namespace propci::estimators
