// Property suites across the whole estimator catalog: equivariance,
// containment, alpha-nesting, monotonicity, exactness of the conditional
// error computation, and quadrature-vs-simulation agreement. The acceptance
// binary re-runs the same suites at full Monte-Carlo strength.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "propci/evaluation.hpp"

using namespace propci::evaluation;
using propci::estimators::BoundTable;
using propci::estimators::BoundTableCache;
using propci::estimators::Interval;
using propci::estimators::interval;
using propci::estimators::method_catalog;
using propci::estimators::method_id;
using propci::estimators::method_properties;
namespace num = propci::numerics;

namespace {

std::vector<std::int64_t> sampled_x(std::int64_t n) {
  std::vector<std::int64_t> xs;
  for (std::int64_t x : {std::int64_t{0}, std::int64_t{1}, std::int64_t{2},
                         std::int64_t{3}, std::int64_t{5}, std::int64_t{8},
                         n / 16, n / 8, n / 4, n / 2 - 1, n / 2, 3 * n / 4,
                         n - 3, n - 2, n - 1, n}) {
    if (x >= 0 && x <= n) xs.push_back(x);
  }
  return xs;
}

}  // namespace

TEST_CASE("equivariance across the catalog") {
  for (double alpha : {0.05, 0.10}) {
    const ConfidenceSpec conf(alpha);
    for (Method m : method_catalog()) {
      const MethodSpec spec(m);
      for (std::int64_t n = 1; n <= 64; ++n) {
        for (std::int64_t x = 0; x <= n; ++x) {
          const Interval a = interval(spec, {x, n}, conf);
          const Interval b = interval(spec, {n - x, n}, conf);
          REQUIRE_MESSAGE(
              std::fabs(a.upper_raw - (1.0 - b.lower_raw)) <= 1e-12,
              method_id(m) << " raw x=" << x << " n=" << n << " alpha=" << alpha);
          REQUIRE_MESSAGE(std::fabs(a.upper - (1.0 - b.lower)) <= 1e-12,
                          method_id(m) << " clamped x=" << x << " n=" << n);
        }
      }
      for (std::int64_t n : {std::int64_t{225}, std::int64_t{2048}}) {
        for (std::int64_t x : sampled_x(n)) {
          const Interval a = interval(spec, {x, n}, conf);
          const Interval b = interval(spec, {n - x, n}, conf);
          REQUIRE_MESSAGE(
              std::fabs(a.upper_raw - (1.0 - b.lower_raw)) <= 1e-12,
              method_id(m) << " raw x=" << x << " n=" << n << " alpha=" << alpha);
        }
      }
    }
  }
}

TEST_CASE("mid-P and Blaker intervals are contained in Clopper-Pearson") {
  for (double alpha : {0.05, 0.10}) {
    const ConfidenceSpec conf(alpha);
    auto contained = [&](std::int64_t x, std::int64_t n) {
      const auto cp = interval(MethodSpec(Method::ClopperPearson), {x, n}, conf);
      for (Method m : {Method::ClopperPearsonMidP, Method::Blaker}) {
        const auto iv = interval(MethodSpec(m), {x, n}, conf);
        REQUIRE_MESSAGE(iv.lower >= cp.lower - 1e-12,
                        method_id(m) << " lower x=" << x << " n=" << n);
        REQUIRE_MESSAGE(iv.upper <= cp.upper + 1e-12,
                        method_id(m) << " upper x=" << x << " n=" << n);
      }
    };
    for (std::int64_t n = 1; n <= 64; ++n) {
      for (std::int64_t x = 0; x <= n; ++x) contained(x, n);
    }
    for (std::int64_t n : {std::int64_t{225}, std::int64_t{2048}}) {
      for (std::int64_t x : sampled_x(n)) contained(x, n);
    }
  }
}

TEST_CASE("90% intervals nest inside 95% intervals for monotone methods") {
  const ConfidenceSpec c95(0.05), c90(0.10);
  for (Method m : method_catalog()) {
    if (!method_properties(m).monotone_in_x) continue;
    const MethodSpec spec(m);
    for (std::int64_t n = 1; n <= 64; ++n) {
      for (std::int64_t x = 0; x <= n; ++x) {
        const auto wide = interval(spec, {x, n}, c95);
        const auto narrow = interval(spec, {x, n}, c90);
        REQUIRE_MESSAGE(narrow.lower >= wide.lower - 1e-12,
                        method_id(m) << " x=" << x << " n=" << n);
        REQUIRE_MESSAGE(narrow.upper <= wide.upper + 1e-12,
                        method_id(m) << " x=" << x << " n=" << n);
      }
    }
  }
}

TEST_CASE("bounds are monotone in x for the methods that claim it") {
  const ConfidenceSpec conf(0.05);
  for (Method m : method_catalog()) {
    if (!method_properties(m).monotone_in_x) continue;
    const MethodSpec spec(m);
    for (std::int64_t n : {std::int64_t{5}, std::int64_t{17}, std::int64_t{40},
                           std::int64_t{64}}) {
      Interval prev = interval(spec, {0, n}, conf);
      for (std::int64_t x = 1; x <= n; ++x) {
        const Interval cur = interval(spec, {x, n}, conf);
        REQUIRE_MESSAGE(cur.lower >= prev.lower - 1e-12,
                        method_id(m) << " lower x=" << x << " n=" << n);
        REQUIRE_MESSAGE(cur.upper >= prev.upper - 1e-12,
                        method_id(m) << " upper x=" << x << " n=" << n);
        if (prev.lower > 0.0 && prev.lower < 1.0 && cur.lower > 0.0 &&
            cur.lower < 1.0) {
          REQUIRE_MESSAGE(cur.lower > prev.lower,
                          method_id(m) << " strict lower x=" << x << " n=" << n);
        }
        if (prev.upper > 0.0 && prev.upper < 1.0 && cur.upper > 0.0 &&
            cur.upper < 1.0) {
          REQUIRE_MESSAGE(cur.upper > prev.upper,
                          method_id(m) << " strict upper x=" << x << " n=" << n);
        }
        prev = cur;
      }
    }
  }
}

TEST_CASE("conditional errors equal brute-force enumeration up to n = 100") {
  const ConfidenceSpec conf(0.05);
  const std::vector<Method> methods = {
      Method::Wald,          Method::Wilson,
      Method::ClopperPearson, Method::ClopperPearsonMidP,
      Method::Blaker,        Method::JeffreysModified,
      Method::BootPercentile, Method::CompositeDellas};
  for (Method m : methods) {
    for (std::int64_t n : {std::int64_t{3}, std::int64_t{10}, std::int64_t{37},
                           std::int64_t{100}}) {
      auto table = BoundTableCache::global().get(MethodSpec(m), n, conf);
      table->ensure_all();
      for (double p : {0.004, 0.05, 0.21, 0.5, 0.83, 0.996}) {
        // brute force with the same pmf over every outcome
        double al = 0.0, au = 0.0;
        for (std::int64_t x = 0; x <= n; ++x) {
          const double pmf = num::binomial_pmf(x, n, p);
          if (table->lower(x) > p) al += pmf;
          if (table->upper(x) < p) au += pmf;
        }
        const auto got = conditional_errors(*table, p);
        REQUIRE_MESSAGE(std::fabs(got.alpha_l - al) <= 1e-12,
                        method_id(m) << " n=" << n << " p=" << p);
        REQUIRE_MESSAGE(std::fabs(got.alpha_u - au) <= 1e-12,
                        method_id(m) << " n=" << n << " p=" << p);
      }
    }
  }
}

TEST_CASE("error decomposition: alpha_l + alpha_u + coverage = 1") {
  const ConfidenceSpec conf(0.05);
  for (Method m : {Method::ClopperPearson, Method::Wald, Method::ClopperPearsonMidP,
                   Method::BootPercentile}) {
    for (std::int64_t n : {std::int64_t{17}, std::int64_t{64}, std::int64_t{225},
                           std::int64_t{512}}) {
      auto table = BoundTableCache::global().get(MethodSpec(m), n, conf);
      table->ensure_all();
      for (double p : {0.01, 0.2, 0.5, 0.93}) {
        double cov = 0.0, comp = 0.0;
        for (std::int64_t x = 0; x <= n; ++x) {
          if (table->lower(x) > p || table->upper(x) < p) continue;
          const double term = num::binomial_pmf(x, n, p) - comp;
          const double next = cov + term;
          comp = (next - cov) - term;
          cov = next;
        }
        const auto e = conditional_errors(*table, p);
        REQUIRE_MESSAGE(std::fabs(e.alpha_l + e.alpha_u + cov - 1.0) <= 1e-12,
                        method_id(m) << " n=" << n << " p=" << p);
      }
    }
  }
}

TEST_CASE("local-average curves are smoother than conditional curves") {
  const std::vector<Method> nine = {
      Method::Wald,           Method::WilsonModified,
      Method::ArcsineBartlett, Method::WaldLogitModified,
      Method::LikelihoodRatioModified, Method::JeffreysModified,
      Method::Blaker,         Method::ClopperPearson,
      Method::ClopperPearsonMidP};
  EvaluationGrid g;
  g.sample_sizes = {2048};
  g.lambda_values = EvaluationGrid::log_spaced(0.05, 100.0, 150);
  for (Method m : nine) {
    const auto cond = error_curve(MethodSpec(m), g, Regime::Conditional);
    const auto loc = error_curve(MethodSpec(m), g, Regime::LocalAverage);
    REQUIRE(cond.size() == loc.size());
    double tv_cond = 0.0, tv_loc = 0.0;
    for (std::size_t i = 1; i < cond.size(); ++i) {
      tv_cond += std::fabs(cond[i].errors.two_sided() - cond[i - 1].errors.two_sided());
      tv_loc += std::fabs(loc[i].errors.two_sided() - loc[i - 1].errors.two_sided());
    }
    REQUIRE_MESSAGE(tv_loc < tv_cond, method_id(m) << " tv_loc=" << tv_loc
                                                   << " tv_cond=" << tv_cond);
  }
}

TEST_CASE("exact interval stays more conservative than mid-P under mixing") {
  const ConfidenceSpec conf(0.05);
  for (double lambda : EvaluationGrid::log_spaced(0.1, 30.0, 25)) {
    const auto model = RandomProportionModel::calibrated(lambda / 64.0, 1.2);
    const auto cp = local_average_errors(Method::ClopperPearson, 64, model, conf);
    const auto mp = local_average_errors(Method::ClopperPearsonMidP, 64, model, conf);
    CHECK(cp.alpha_l <= mp.alpha_l + 1e-9);
    CHECK(cp.alpha_u <= mp.alpha_u + 1e-9);
    const auto wcp = local_average_half_widths(Method::ClopperPearson, 64, model,
                                               conf, Method::ClopperPearsonMidP);
    CHECK(wcp.ratio_l >= 1.0 - 1e-9);
    CHECK(wcp.ratio_u >= 1.0 - 1e-9);
  }
}

TEST_CASE("bootstrap biases bracket wald at lambda = 4, n = 2048") {
  const ConfidenceSpec conf(0.05);
  const auto model = RandomProportionModel::calibrated(4.0 / 2048.0, 1.2);
  const double basic =
      local_average_errors(Method::BootBasic, 2048, model, conf).two_sided();
  const double wald =
      local_average_errors(Method::Wald, 2048, model, conf).two_sided();
  const double perc =
      local_average_errors(Method::BootPercentile, 2048, model, conf).two_sided();
  CHECK(basic >= wald);
  CHECK(perc <= wald);
}

TEST_CASE("continuity-corrected intervals contain the uncorrected ones") {
  const ConfidenceSpec conf(0.05);
  for (std::int64_t n = 1; n <= 64; ++n) {
    for (std::int64_t x = 0; x <= n; ++x) {
      const auto w = interval(MethodSpec(Method::Wald), {x, n}, conf);
      const auto wcc = interval(MethodSpec(Method::WaldCC), {x, n}, conf);
      REQUIRE(wcc.lower <= w.lower + 1e-15);
      REQUIRE(wcc.upper >= w.upper - 1e-15);
      const auto s = interval(MethodSpec(Method::Wilson), {x, n}, conf);
      const auto scc = interval(MethodSpec(Method::WilsonCC), {x, n}, conf);
      REQUIRE(scc.lower <= s.lower + 1e-15);
      REQUIRE(scc.upper >= s.upper - 1e-15);
    }
  }
}

TEST_CASE("quadrature agrees with the seeded simulation oracle") {
  const std::int64_t draws = 2000000;  // acceptance reruns this at 1e7
  struct Config {
    Method method;
    std::int64_t n;
    double lambda;
    double or_s;
  };
  const std::vector<Config> configs = {
      {Method::ClopperPearsonMidP, 64, 4.0, 1.2},
      {Method::ClopperPearson, 32, 2.0, 1.2},
      {Method::Wald, 2048, 8.0, 1.2},
      {Method::Blaker, 64, 6.0, 1.05},
      {Method::Wilson, 225, 4.905, 1.2},
      {Method::JeffreysModified, 64, 2.0, 1.1},
      {Method::ArcsineBartlett, 32, 4.0, 1.2},
      {Method::BootPercentile, 225, 2.0, 1.2},
      {Method::WaldLogitModified, 2048, 0.11, 1.2},
      {Method::CompositeDellas, 225, 4.905, 1.2},
  };
  const ConfidenceSpec conf(0.05);
  std::uint64_t seed = 90210;
  for (const auto& c : configs) {
    const auto model =
        RandomProportionModel::calibrated(c.lambda / static_cast<double>(c.n), c.or_s);
    const auto exact = local_average_errors(MethodSpec(c.method), c.n, model, conf);
    const auto mc =
        monte_carlo_oracle(MethodSpec(c.method), c.n, model, conf, draws, seed++);
    REQUIRE_MESSAGE(std::fabs(exact.alpha_l - mc.alpha_l) <= 3.0 * mc.se_l + 1e-9,
                    method_id(c.method) << " lower: exact=" << exact.alpha_l
                                        << " mc=" << mc.alpha_l << " se=" << mc.se_l);
    REQUIRE_MESSAGE(std::fabs(exact.alpha_u - mc.alpha_u) <= 3.0 * mc.se_u + 1e-9,
                    method_id(c.method) << " upper: exact=" << exact.alpha_u
                                        << " mc=" << mc.alpha_u << " se=" << mc.se_u);
  }
}

TEST_CASE("half-widths agree with the simulation oracle at n = 32") {
  // E[w] cross-check by direct simulation of the two-step experiment
  const ConfidenceSpec conf(0.05);
  const auto model = RandomProportionModel::calibrated(4.0 / 32.0, 1.2);
  const auto rep = local_average_half_widths(Method::ClopperPearsonMidP, 32, model,
                                             conf, std::nullopt);
  auto table = BoundTableCache::global().get(MethodSpec(Method::ClopperPearsonMidP),
                                             32, conf);
  table->ensure_all();
  std::mt19937_64 rng(5150);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int draws = 10000000;
  double sl = 0.0, sl2 = 0.0, su = 0.0, su2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double p = num::inv_logit(model.mu + model.sigma * gauss(rng));
    // inversion by CDF walk
    const double u = unif(rng);
    double cum = std::pow(1.0 - p, 32.0), pmf = cum;
    std::int64_t x = 0;
    while (cum <= u && x < 32) {
      ++x;
      pmf *= (32.0 - x + 1.0) / x * (p / (1.0 - p));
      cum += pmf;
    }
    const double ph = static_cast<double>(x) / 32.0;
    const double wl = ph - table->lower(x);
    const double wu = table->upper(x) - ph;
    sl += wl;
    sl2 += wl * wl;
    su += wu;
    su2 += wu * wu;
  }
  const double ml = sl / draws, mu_ = su / draws;
  const double sel = std::sqrt((sl2 / draws - ml * ml) / draws);
  const double seu = std::sqrt((su2 / draws - mu_ * mu_) / draws);
  CHECK(std::fabs(rep.w_l - ml) <= 3.0 * sel);
  CHECK(std::fabs(rep.w_u - mu_) <= 3.0 * seu);
}
