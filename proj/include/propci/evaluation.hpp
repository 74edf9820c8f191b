#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "propci/estimators.hpp"
#include "propci/numerics.hpp"

// Coverage-error evaluation of the interval estimators: exact conditional
// errors, local-average errors and half-widths under a logit-normal random
// true proportion, the random-sample-size sensitivity variant, grid sweeps,
// and a seeded Monte-Carlo oracle used by the tests to cross-validate the
// quadrature path.
namespace propci::evaluation {

using estimators::BinomialSample;
using estimators::BoundTable;
using estimators::ConfidenceSpec;
using estimators::Method;
using estimators::MethodSpec;

enum class Regime { Conditional, LocalAverage, RandomSize };

// Logit-normal law of the true proportion: logit(P) ~ N(mu, sigma^2) with
// sigma = ln(OR_S), mu calibrated so that E[P] = p0.
struct RandomProportionModel {
  double p0 = 0.1;
  double or_s = 1.20;
  double sigma = 0.0;
  double mu = 0.0;

  static RandomProportionModel calibrated(double p0, double or_s);
};

// Solves E[inv_logit(mu + sigma Z)] = p0 for mu; sigma = 0 gives logit(p0).
double calibrate_mu(double p0, double sigma);

// Random sample size N = max(1, round(n_center * exp(sigma_n * Z))) with a
// constant true proportion p.
struct RandomSampleSizeModel {
  std::int64_t n_center = 64;
  double sigma_n = 0.0;
  double p = 0.1;
};

struct ErrorReport {
  double alpha_l = 0.0;  // Pr(interval entirely below the true proportion)
  double alpha_u = 0.0;  // Pr(interval entirely above)
  Regime regime = Regime::Conditional;
  double se_l = 0.0;  // standard errors, Monte-Carlo oracle only
  double se_u = 0.0;

  double two_sided() const { return alpha_l + alpha_u; }
};

struct HalfWidthReport {
  double w_l = 0.0;  // E[x/n - L]
  double w_u = 0.0;  // E[U - x/n]
  std::optional<Method> relative_to;
  double ratio_l = 0.0;
  double ratio_u = 0.0;
};

struct EvaluationGrid {
  std::vector<std::int64_t> sample_sizes{32, 64, 2048};
  std::vector<double> lambda_values;  // expected successes, n*p0
  double alpha = 0.05;
  double or_s = 1.20;

  static std::vector<double> log_spaced(double lo, double hi, int count);
  // 400 lambda points log-spaced in [0.05, 100], n in {32, 64, 2048}.
  static EvaluationGrid defaults();
};

// Quadrature controls for the local-average integrals (absolute accuracy
// target 1e-6 on the error probabilities).
struct QuadratureSettings {
  int nodes_per_panel = 24;
  double tail_sigmas = 8.0;  // logit-scale truncation of the mixing normal
};

// Exact summation over x of Pr(X = x | p) classified against the clamped
// bound table; a bound exactly equal to p counts as covering.
ErrorReport conditional_errors(const MethodSpec& method, std::int64_t n, double p,
                               const ConfidenceSpec& conf);
ErrorReport conditional_errors(BoundTable& table, double p);

ErrorReport local_average_errors(const MethodSpec& method, std::int64_t n,
                                 const RandomProportionModel& model,
                                 const ConfidenceSpec& conf,
                                 const QuadratureSettings& quad = {});

HalfWidthReport local_average_half_widths(const MethodSpec& method, std::int64_t n,
                                          const RandomProportionModel& model,
                                          const ConfidenceSpec& conf,
                                          std::optional<Method> reference,
                                          const QuadratureSettings& quad = {});

ErrorReport random_size_errors(const MethodSpec& method,
                               const RandomSampleSizeModel& model,
                               const ConfidenceSpec& conf);

struct CurvePoint {
  std::int64_t n = 0;
  double lambda = 0.0;
  double p0 = 0.0;
  ErrorReport errors;
  std::optional<HalfWidthReport> widths;
};

struct CurveOptions {
  bool with_widths = false;
  std::optional<Method> width_reference = Method::ClopperPearsonMidP;
  QuadratureSettings quad;
};

// Evaluates the regime at every (n, lambda) grid point with lambda/n < 1;
// mu is recalibrated per point. Rows ordered by (n, lambda ascending).
// Embarrassingly parallel; thread count capped by PROPCI_THREADS.
std::vector<CurvePoint> error_curve(const MethodSpec& method,
                                    const EvaluationGrid& grid, Regime regime,
                                    const CurveOptions& options = {});

struct ScanResult {
  double max_error = 0.0;
  std::int64_t n = 0;
  double lambda = 0.0;
  double p = 0.0;
  char side = 'L';
};

// Largest one-sided error over the grid. In the conditional regime the scan
// also probes just past each bound discontinuity inside the grid's p-range,
// so the reported maximum tracks the supremum rather than the grid mesh.
ScanResult max_error_scan(const MethodSpec& method, const EvaluationGrid& grid,
                          Regime regime);

struct ValidityReport {
  double max_error = 0.0;
  std::int64_t n_at_max = 0;
  double lambda_at_max = 0.0;
  char side = 'L';
  double limit = 0.0;  // 1.5 * (alpha/2)
  bool pass = false;
  std::size_t points_used = 0;
};

// Restricts the grid to points where Pr(min(X, n-X) <= threshold) < 1e-6
// under the mixing model and reports the worst one-sided local-average Wald
// error there. Throws std::runtime_error when no grid point qualifies.
ValidityReport wald_validity_check(std::int64_t threshold, const ConfidenceSpec& conf,
                                   const EvaluationGrid& grid);

// Two-step simulation (draw p, then X) with empirical one-sided error rates
// and binomial standard errors. Deterministic for a fixed seed.
ErrorReport monte_carlo_oracle(const MethodSpec& method, std::int64_t n,
                               const RandomProportionModel& model,
                               const ConfidenceSpec& conf, std::int64_t draws,
                               std::uint64_t seed);
ErrorReport monte_carlo_oracle(const MethodSpec& method,
                               const RandomSampleSizeModel& model,
                               const ConfidenceSpec& conf, std::int64_t draws,
                               std::uint64_t seed);

// Fixed-chunk parallel loop used for grid sweeps; results must go to
// preassigned slots. Thread count: min(hardware, PROPCI_THREADS).
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& work);
unsigned max_threads();

}  // namespace propci::evaluation
