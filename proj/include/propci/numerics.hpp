#pragma once

#include <cstdint>
#include <functional>
#include <vector>

// Self-contained numerical kernel: stable binomial probabilities, regularized
// incomplete beta/gamma functions and their inverses, normal and chi-square
// quantiles, bracketed root finding, and Gauss-Legendre quadrature for
// truncated-normal expectations. Everything here is a pure function of its
// inputs and safe to call concurrently.
namespace propci::numerics {

struct Tolerance {
  double abs_p = 1e-10;     // absolute tolerance on the proportion scale
  double abs_prob = 1e-12;  // absolute tolerance on probabilities
  int max_iter = 200;

  void validate() const;  // throws std::invalid_argument on bad values
};

// --- binomial distribution -------------------------------------------------

// log Pr(X = x) for X ~ Binomial(n, p). Accurate for n in the thousands
// (log-factorial table accumulated in extended precision). Convention
// 0*log(0) = 0 covers p in {0, 1}.
double log_binomial_pmf(std::int64_t x, std::int64_t n, double p);
double binomial_pmf(std::int64_t x, std::int64_t n, double p);
double log_binomial_coefficient(std::int64_t n, std::int64_t x);

// Pr(X >= x); equals I_p(x, n-x+1) for 1 <= x <= n, 1 for x <= 0.
double binomial_tail_geq(std::int64_t x, std::int64_t n, double p);
// Pr(X <= x).
double binomial_cdf(std::int64_t x, std::int64_t n, double p);

// --- special functions -----------------------------------------------------

double log_beta(double a, double b);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double reg_inc_beta(double a, double b, double x);

// Inverse of I_x(a, b) in x: returns x with I_x(a, b) = q to tol.abs_prob.
double reg_inc_beta_inv(double a, double b, double q, const Tolerance& tol = {});

double normal_pdf(double z);
double normal_cdf(double z);
// Inverse standard normal CDF; 0 < q < 1. Antisymmetric by construction.
double normal_quantile(double q);

// Regularized lower incomplete gamma P(a, x).
double reg_lower_gamma(double a, double x);
double chi_square_cdf(double x, double df);
// Inverse chi-square CDF; 0 <= q < 1, df > 0. q = 0 maps to 0.
double chi_square_quantile(double q, double df, const Tolerance& tol = {});

double logit(double p);
double inv_logit(double t);

// --- root finding ------------------------------------------------------------

// Root of a continuous monotone f (either direction) on [lo, hi] with
// f(lo), f(hi) straddling zero. Plain bisection, resolved to tol.abs_p
// or better.
double find_root_monotone(const std::function<double(double)>& f, double lo,
                          double hi, const Tolerance& tol = {});

// inf{ q in [lo, hi] : f(q) > threshold } for a nondecreasing f (step
// functions allowed). Requires f(hi) > threshold; returns hi if the set is
// empty up to tolerance.
double find_threshold_infimum(const std::function<double(double)>& f,
                              double threshold, double lo, double hi,
                              const Tolerance& tol = {});

// --- quadrature --------------------------------------------------------------

enum class RuleKind { GaussLegendreOnInterval, TruncatedNormal };

struct QuadratureRule {
  std::vector<double> nodes;    // strictly increasing
  std::vector<double> weights;  // positive
  RuleKind kind = RuleKind::GaussLegendreOnInterval;

  double sum_weights() const;

  template <class F>
  double integrate(F&& g) const {
    double acc = 0.0, comp = 0.0;  // Kahan
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      double term = weights[i] * g(nodes[i]) - comp;
      double next = acc + term;
      comp = (next - acc) - term;
      acc = next;
    }
    return acc;
  }
};

// Reference Gauss-Legendre nodes/weights on [-1, 1], cached per m.
struct GaussLegendreReference {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussLegendreReference& gauss_legendre_reference(int m);

QuadratureRule gauss_legendre_on_interval(double a, double b, int m);

// Rule approximating the truncated normal expectation
//   integral_{-inf}^{upper_cut} g(t) phi((t-mu)/sigma)/sigma dt
// realized as Gauss-Legendre on [mu - 8 sigma, min(upper_cut, mu + 8 sigma)].
// The neglected tail mass beyond 8 sigma is < 1e-15. Empty range gives a
// zero rule. m >= 16 nodes.
QuadratureRule truncated_normal_quadrature(double mu, double sigma,
                                           double upper_cut, int m);

// Composite expectation of g under N(mu, sigma^2) restricted to [t_lo, t_hi]:
// panels of width <= max_panel_width, Gauss-Legendre nodes per panel. Used
// where the integrand has features narrower than sigma.
double normal_expectation(double mu, double sigma, double t_lo, double t_hi,
                          const std::function<double(double)>& g,
                          double max_panel_width, int nodes_per_panel = 24);

}  // namespace propci::numerics
