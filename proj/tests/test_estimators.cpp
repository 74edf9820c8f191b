#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "propci/estimators.hpp"
#include "propci/numerics.hpp"

using namespace propci::estimators;
namespace num = propci::numerics;

namespace {

const ConfidenceSpec kConf95(0.05);

double pct(double v) { return 100.0 * v; }

// Grid-scan oracle for search-defined lower bounds: first q (1e-6 steps,
// then local bisection) where the acceptance function exceeds its threshold.
double blaker_lower_scan_oracle(std::int64_t x, std::int64_t n, double alpha) {
  const BinomialSample s{x, n};
  double q = std::max(1e-9, num::reg_inc_beta_inv(static_cast<double>(x),
                                                  static_cast<double>(n - x + 1),
                                                  alpha / 2) -
                               2e-4);
  const double step = 1e-6;
  while (blaker_pvalue(q, s) <= alpha) q += step;
  double lo = q - step, hi = q;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (blaker_pvalue(mid, s) > alpha ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

double midp_lower_scan_oracle(std::int64_t x, std::int64_t n, double alpha) {
  auto f = [&](double q) {
    return num::binomial_tail_geq(x, n, q) - 0.5 * num::binomial_pmf(x, n, q);
  };
  double q = 1e-7;
  while (f(q) <= alpha / 2) q += 1e-6;
  double lo = q - 1e-6, hi = q;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > alpha / 2 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

double lr_lower_scan_oracle(std::int64_t x, std::int64_t n, double alpha) {
  const double kappa = num::normal_quantile(1.0 - alpha / 2);
  const double ph = static_cast<double>(x) / static_cast<double>(n);
  auto dev = [&](double q) {
    return x * std::log(ph / q) +
           (n - x) * std::log((1.0 - ph) / (1.0 - q));
  };
  double q = 1e-7;
  while (dev(q) > kappa * kappa / 2) q += 1e-6;
  double lo = q - 1e-6, hi = q;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (dev(mid) <= kappa * kappa / 2 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("sample and confidence validation") {
  CHECK_THROWS_AS(BinomialSample({-1, 5}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(BinomialSample({6, 5}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(ConfidenceSpec(0.0), std::invalid_argument);
  CHECK_THROWS_AS(ConfidenceSpec(1.0), std::invalid_argument);
  CHECK(kConf95.kappa == doctest::Approx(1.9599639845).epsilon(1e-9));
}

TEST_CASE("method ids round-trip") {
  for (Method m : method_catalog()) {
    CHECK(method_from_id(method_id(m)) == m);
  }
  CHECK_THROWS_AS(method_from_id("nope"), std::invalid_argument);
  CHECK(method_catalog().size() == 15);
}

TEST_CASE("clopper-pearson bounds at the worked-example samples") {
  const auto iv = interval(Method::ClopperPearson, {1, 225}, kConf95);
  CHECK(iv.lower == doctest::Approx(1.1252e-4).epsilon(2e-4));
  CHECK(std::fabs(num::reg_inc_beta(1, 225, iv.lower) - 0.025) <= 1e-9);
  const auto iv46 = interval(Method::ClopperPearson, {2, 46}, kConf95);
  CHECK(pct(iv46.lower) == doctest::Approx(0.5).epsilon(0.1));
  CHECK(pct(iv46.upper) == doctest::Approx(14.8).epsilon(0.01));
}

TEST_CASE("wald interval collapses to a point at x = 0") {
  const auto iv = interval(Method::Wald, {0, 50}, kConf95);
  CHECK(iv.lower_raw == 0.0);
  CHECK(iv.upper_raw == 0.0);
  CHECK(iv.lower == 0.0);
  CHECK(iv.upper == 0.0);
}

TEST_CASE("mid-P interval for 1/225 and Table-2 style rounding") {
  const auto iv = interval(Method::ClopperPearsonMidP, {1, 225}, kConf95);
  CHECK(std::round(pct(iv.lower) * 100) / 100 == doctest::Approx(0.02));
  CHECK(std::round(pct(iv.upper) * 10) / 10 == doctest::Approx(2.2));
  CHECK(iv.lower == doctest::Approx(midp_lower_scan_oracle(1, 225, 0.05)).epsilon(5e-5));
}

TEST_CASE("modified wald-logit interval for 1/225") {
  const auto iv = interval(Method::WaldLogitModified, {1, 225}, kConf95);
  CHECK(std::round(pct(iv.lower) * 100) / 100 == doctest::Approx(0.06));
  CHECK(std::round(pct(iv.upper) * 10) / 10 == doctest::Approx(3.1));
}

TEST_CASE("modified likelihood-ratio interval for 2/46") {
  const auto iv = interval(Method::LikelihoodRatioModified, {2, 46}, kConf95);
  CHECK(std::round(pct(iv.lower) * 10) / 10 == doctest::Approx(0.7));
  CHECK(std::round(pct(iv.upper) * 10) / 10 == doctest::Approx(12.8));
}

TEST_CASE("plain wilson interval for 1/225") {
  const auto iv = interval(Method::Wilson, {1, 225}, kConf95);
  CHECK(std::round(pct(iv.lower) * 100) / 100 == doctest::Approx(0.08));
  CHECK(std::round(pct(iv.upper) * 10) / 10 == doctest::Approx(2.5));
}

TEST_CASE("search-defined lower bounds match the grid-scan oracles") {
  CHECK(lower_bound(Method::Blaker, {5, 20}, kConf95) ==
        doctest::Approx(blaker_lower_scan_oracle(5, 20, 0.05)).epsilon(1e-5));
  const std::vector<std::pair<std::int64_t, std::int64_t>> cases = {
      {1, 10}, {3, 7}, {7, 7}, {2, 46}, {1, 225}, {11, 64}};
  for (auto [x, n] : cases) {
    const double fast = lower_bound(Method::Blaker, {x, n}, kConf95);
    const double slow = blaker_lower_scan_oracle(x, n, 0.05);
    CHECK(std::fabs(fast - slow) <= 2e-6);
  }
  CHECK(std::fabs(lower_bound(Method::ClopperPearsonMidP, {4, 33}, kConf95) -
                  midp_lower_scan_oracle(4, 33, 0.05)) <= 2e-6);
  CHECK(std::fabs(lower_bound(Method::LikelihoodRatioModified, {4, 33}, kConf95) -
                  lr_lower_scan_oracle(4, 33, 0.05)) <= 2e-6);
  CHECK(std::fabs(lower_bound(Method::LikelihoodRatioModified, {1, 225}, kConf95) -
                  0.0003) <= 1e-4);
}

TEST_CASE("blaker p-value: degenerate, symmetric center, reflection") {
  CHECK(blaker_pvalue(1.0, {10, 10}) == 1.0);
  // symmetric center: both tails fully counted
  CHECK(blaker_pvalue(0.5, {5, 10}) == doctest::Approx(1.0).epsilon(1e-12));
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < 40; ++i) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng() % 60);
    const std::int64_t x = static_cast<std::int64_t>(rng() % (n + 1));
    const double p = unif(rng);
    CHECK(blaker_pvalue(p, {x, n}) ==
          doctest::Approx(blaker_pvalue(1.0 - p, {n - x, n})).epsilon(1e-12));
    CHECK(blaker_pvalue(p, {x, n}) >= 0.0);
    CHECK(blaker_pvalue(p, {x, n}) <= 1.0);
  }
}

TEST_CASE("bootstrap distribution: degenerate, closed form, normalization") {
  const auto d0 = bootstrap_distribution({0, 40});
  CHECK(d0.pmf[0] == 1.0);
  CHECK(d0.quantile(0.025) == 0.0);
  CHECK(d0.quantile(0.975) == 0.0);

  const auto d = bootstrap_distribution({1, 225});
  CHECK(d.pmf[0] ==
        doctest::Approx(std::pow(224.0 / 225.0, 225.0)).epsilon(1e-12));
  CHECK(d.pmf[0] == doctest::Approx(0.3669).epsilon(1e-3));
  CHECK(d.cdf[225] == doctest::Approx(1.0).epsilon(1e-12));

  const auto dn = bootstrap_distribution({46, 46});
  CHECK(dn.pmf[46] == 1.0);
  CHECK(dn.quantile(0.5) == 1.0);
}

TEST_CASE("bootstrap intervals reproduce the worked-example cells") {
  const auto p225 = bootstrap_interval(BootstrapKind::Percentile, {1, 225}, kConf95);
  CHECK(p225.lower == 0.0);
  CHECK(p225.upper == doctest::Approx(3.0 / 225.0));
  const auto p46 = bootstrap_interval(BootstrapKind::Percentile, {2, 46}, kConf95);
  CHECK(p46.lower == 0.0);
  CHECK(p46.upper == doctest::Approx(5.0 / 46.0));
  const auto b46 = bootstrap_interval(BootstrapKind::Basic, {2, 46}, kConf95);
  CHECK(b46.lower_raw == doctest::Approx(-1.0 / 46.0));
  CHECK(b46.upper_raw == doctest::Approx(4.0 / 46.0));
  CHECK(b46.lower == 0.0);  // clamped view
}

TEST_CASE("composite estimator substitutes the exact interval at x = 0") {
  const auto c = composite_dellas_interval({0, 100}, kConf95);
  const auto cp = interval(Method::ClopperPearson, {0, 100}, kConf95);
  CHECK(c.lower == cp.lower);
  CHECK(c.upper == cp.upper);
  CHECK(c.upper == doctest::Approx(1.0 - std::pow(0.025, 0.01)).epsilon(1e-10));
  const auto mid = composite_dellas_interval({1, 225}, kConf95);
  const auto perc = bootstrap_interval(BootstrapKind::Percentile, {1, 225}, kConf95);
  CHECK(mid.lower == perc.lower);
  CHECK(mid.upper == perc.upper);
  // equivariance by construction
  for (std::int64_t x : {0, 1, 7, 50, 99, 100}) {
    const auto a = composite_dellas_interval({x, 100}, kConf95);
    const auto b = composite_dellas_interval({100 - x, 100}, kConf95);
    CHECK(a.upper_raw == doctest::Approx(1.0 - b.lower_raw).epsilon(1e-12));
  }
}

TEST_CASE("continuity corrections contain their uncorrected counterparts") {
  for (std::int64_t n : {5, 20, 50, 225}) {
    for (std::int64_t x = 0; x <= n; ++x) {
      const auto wald = interval(Method::Wald, {x, n}, kConf95);
      const auto wald_cc = continuity_corrected_interval(CorrectedKind::WaldCC,
                                                         {x, n}, kConf95);
      CHECK(wald_cc.lower_raw <= wald.lower_raw + 1e-15);
      CHECK(wald_cc.upper_raw >= wald.upper_raw - 1e-15);
      const auto wilson = interval(Method::Wilson, {x, n}, kConf95);
      const auto wilson_cc = continuity_corrected_interval(CorrectedKind::WilsonCC,
                                                           {x, n}, kConf95);
      CHECK(wilson_cc.lower <= wilson.lower + 1e-15);
      CHECK(wilson_cc.upper >= wilson.upper - 1e-15);
    }
  }
  const auto cc = interval(Method::WaldCC, {10, 20}, kConf95);
  const double want_half = 1.9599639845 * std::sqrt(0.0125) + 0.025;
  CHECK(cc.lower_raw == doctest::Approx(0.5 - want_half).epsilon(1e-9));
  CHECK(cc.upper_raw == doctest::Approx(0.5 + want_half).epsilon(1e-9));
}

TEST_CASE("modified wilson small-count branch") {
  CHECK(MethodSpec::wilson_x_star(50) == 2);
  CHECK(MethodSpec::wilson_x_star(51) == 3);
  MethodSpec spec(Method::WilsonModified);
  const double got = lower_bound(spec, {1, 40}, kConf95);
  CHECK(got == doctest::Approx(num::chi_square_quantile(0.05, 2) / 80.0)
                   .epsilon(1e-12));
  // x above the threshold falls back to the plain score bound
  CHECK(lower_bound(spec, {5, 40}, kConf95) ==
        doctest::Approx(lower_bound(Method::Wilson, {5, 40}, kConf95))
            .epsilon(1e-14));
  // x = 3 is small-count only for n > 50
  CHECK(lower_bound(spec, {3, 50}, kConf95) ==
        doctest::Approx(lower_bound(Method::Wilson, {3, 50}, kConf95))
            .epsilon(1e-14));
  CHECK(lower_bound(spec, {3, 51}, kConf95) ==
        doctest::Approx(num::chi_square_quantile(0.05, 6) / 102.0).epsilon(1e-12));
  MethodSpec half(Method::WilsonModified);
  half.wilson_small_x_level = WilsonSmallXLevel::HalfAlpha;
  CHECK(lower_bound(half, {1, 40}, kConf95) ==
        doctest::Approx(num::chi_square_quantile(0.025, 2) / 80.0).epsilon(1e-12));
  CHECK(lower_bound(half, {1, 40}, kConf95) < got);
}

TEST_CASE("defining-equation residuals at the bounds") {
  for (double alpha : {0.05, 0.10}) {
    const ConfidenceSpec conf(alpha);
    for (std::int64_t n : {5, 17, 46, 225}) {
      for (std::int64_t x = 0; x <= n; ++x) {
        const double cp = lower_bound(Method::ClopperPearson, {x, n}, conf);
        if (cp > 0.0) {
          CHECK(std::fabs(num::reg_inc_beta(static_cast<double>(x),
                                            static_cast<double>(n - x + 1), cp) -
                          alpha / 2) <= 1e-9);
        }
        if (x > 0 && x < n) {
          const double mp = lower_bound(Method::ClopperPearsonMidP, {x, n}, conf);
          const double m =
              0.5 * (num::reg_inc_beta(static_cast<double>(x),
                                       static_cast<double>(n - x + 1), mp) +
                     num::reg_inc_beta(static_cast<double>(x + 1),
                                       static_cast<double>(n - x), mp));
          CHECK(std::fabs(m - alpha / 2) <= 1e-9);
          const double lr = lower_bound(Method::LikelihoodRatioModified, {x, n}, conf);
          const double ph = static_cast<double>(x) / static_cast<double>(n);
          const double dev = x * std::log(ph / lr) +
                             (n - x) * std::log((1.0 - ph) / (1.0 - lr));
          CHECK(std::fabs(dev - conf.kappa * conf.kappa / 2) <= 1e-8);
        }
      }
    }
  }
}

TEST_CASE("degenerate success counts pin the outer bounds") {
  for (Method m : method_catalog()) {
    for (std::int64_t n : {1, 7, 46}) {
      const auto at0 = interval(MethodSpec(m), {0, n}, kConf95);
      CHECK(at0.lower == 0.0);
      const auto atn = interval(MethodSpec(m), {n, n}, kConf95);
      CHECK(atn.upper == 1.0);
    }
  }
}

TEST_CASE("method properties match the documented classification") {
  CHECK(method_properties(Method::ClopperPearson).monotone_in_x);
  CHECK(method_properties(Method::ClopperPearson).analytic_solution);
  CHECK_FALSE(method_properties(Method::Blaker).monotone_in_x);
  CHECK_FALSE(method_properties(Method::ClopperPearsonMidP).analytic_solution);
  CHECK_FALSE(method_properties(Method::LikelihoodRatioModified).analytic_solution);
  CHECK_FALSE(method_properties(Method::JeffreysModified).monotone_in_x);
  CHECK_FALSE(method_properties(Method::Wald).monotone_in_x);
  for (Method m : method_catalog()) {
    CHECK(method_properties(m).equivariant);
    CHECK(method_properties(m).deterministic);
  }
}

TEST_CASE("bound table caches and matches direct evaluation") {
  auto table = BoundTableCache::global().get(Method::ClopperPearsonMidP, 46, kConf95);
  table->ensure_all();
  for (std::int64_t x = 0; x <= 46; ++x) {
    const auto iv = interval(Method::ClopperPearsonMidP, {x, 46}, kConf95);
    CHECK(table->lower(x) == iv.lower);
    CHECK(table->upper(x) == iv.upper);
    CHECK(table->lower_raw(x) == iv.lower_raw);
  }
  auto again = BoundTableCache::global().get(Method::ClopperPearsonMidP, 46, kConf95);
  CHECK(again.get() == table.get());
}
