#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "npcnet/rng.hpp"
#include "npcnet/treatfx.hpp"

using namespace npcnet;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Episode treated_episode(double fluid, double delay, double age, bool death) {
  Episode ep;
  TreatmentRecord t;
  t.received_vasopressor = true;
  t.iv_fluid_volume_liters = fluid;
  t.time_to_vasopressor_hours = delay;
  t.in_hospital_death = death;
  t.adjusters["age"] = age;
  ep.treatment = t;
  return ep;
}

}  // namespace

TEST_CASE("point e-values match the square-root risk-ratio formula") {
  // values reported for the fluid-effect analyses this mirrors
  REQUIRE_THAT(e_value_point(1.318), WithinAbs(1.56, 0.005));
  REQUIRE_THAT(e_value_point(1.156), WithinAbs(1.36, 0.005));
  REQUIRE_THAT(e_value_point(1.160), WithinAbs(1.37, 0.005));
  REQUIRE_THAT(e_value_point(1.318), WithinAbs(1.5603016671405572, 1e-12));
  REQUIRE_THAT(e_value_point(1.156), WithinAbs(1.3594728313659303, 1e-12));
  REQUIRE_THAT(e_value_point(1.160), WithinAbs(1.3650729561725943, 1e-12));

  // direct arithmetic across the range, including protective effects
  Rng rng(91);
  for (int i = 0; i < 200; ++i) {
    const double orr = std::exp(rng.uniform(-2.5, 2.5));
    double rr = std::sqrt(orr);
    if (rr < 1.0) rr = 1.0 / rr;
    const double expected = rr <= 1.0 ? 1.0 : rr + std::sqrt(rr * (rr - 1.0));
    REQUIRE_THAT(e_value_point(orr), WithinAbs(expected, 1e-12));
  }
  REQUIRE(e_value_point(1.0) == 1.0);
  REQUIRE_THAT(e_value_point(2.0), WithinAbs(e_value_point(0.5), 1e-12));
  REQUIRE_THROWS_AS(e_value_point(0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(e_value_point(-2.0), std::invalid_argument);
}

TEST_CASE("CI e-values use the bound closer to the null") {
  SECTION("harmful estimate with a CI above 1") {
    const EValueResult r = e_value(1.318, 1.1, 1.6);
    REQUIRE(r.ci_bound_used == 1.1);
    REQUIRE_THAT(r.e_value_ci_limit,
                 WithinAbs(e_value_point(1.1), 1e-12));
    REQUIRE_THAT(r.e_value_point, WithinAbs(1.56, 0.005));
  }
  SECTION("protective estimate with a CI below 1") {
    const EValueResult r = e_value(0.6, 0.4, 0.9);
    REQUIRE(r.ci_bound_used == 0.9);
    REQUIRE_THAT(r.e_value_ci_limit, WithinAbs(e_value_point(0.9), 1e-12));
  }
  SECTION("CI crossing the null gives 1") {
    const EValueResult r = e_value(1.318, 0.9, 1.9);
    REQUIRE(r.ci_bound_used == 1.0);
    REQUIRE(r.e_value_ci_limit == 1.0);
    REQUIRE(r.e_value_point > 1.0);
  }
  REQUIRE_THROWS_AS(e_value(1.2, 1.4, 1.1), std::invalid_argument);
  REQUIRE_THROWS_AS(e_value(1.2, -0.1, 1.4), std::invalid_argument);
}

TEST_CASE("intercept-only fit recovers the closed form") {
  // 7 deaths in 20: beta0 = logit(0.35), se = sqrt(1/7 + 1/13)
  std::vector<std::vector<double>> covariates(20);
  std::vector<int> outcomes(20, 0);
  for (int i = 0; i < 7; ++i) outcomes[i] = 1;
  const LogisticFit fit = fit_logistic(covariates, outcomes, {});
  REQUIRE(fit.converged);
  REQUIRE(!fit.separation_suspected);
  REQUIRE(fit.terms == std::vector<std::string>{"(intercept)"});
  REQUIRE_THAT(fit.beta[0], WithinAbs(-0.6190392084062235, 1e-8));
  REQUIRE_THAT(fit.se[0], WithinAbs(0.4688072309384954, 1e-8));
  REQUIRE_THAT(fit.odds_ratio[0], WithinRel(7.0 / 13.0, 1e-8));
}

TEST_CASE("a binary exposure fit matches the contingency closed form") {
  // exposed: 8 deaths / 4 survivors; unexposed: 3 deaths / 9 survivors
  std::vector<std::vector<double>> covariates;
  std::vector<int> outcomes;
  auto add = [&](double x, int y, int count) {
    for (int i = 0; i < count; ++i) {
      covariates.push_back({x});
      outcomes.push_back(y);
    }
  };
  add(1.0, 1, 8);
  add(1.0, 0, 4);
  add(0.0, 1, 3);
  add(0.0, 0, 9);

  const LogisticFit fit = fit_logistic(covariates, outcomes, {"exposed"});
  REQUIRE(fit.converged);
  // log odds ratio = log(ad/bc), se = sqrt(1/a + 1/b + 1/c + 1/d)
  REQUIRE_THAT(fit.beta[1], WithinAbs(1.791759469228055, 1e-8));
  REQUIRE_THAT(fit.se[1], WithinAbs(0.9052317076000179, 1e-8));
  REQUIRE_THAT(fit.beta[0], WithinAbs(-1.0986122886681098, 1e-8));
  REQUIRE_THAT(fit.se[0], WithinAbs(2.0 / 3.0, 1e-8));
  REQUIRE_THAT(fit.odds_ratio[1], WithinRel(6.0, 1e-7));
  REQUIRE_THAT(fit.ci_low[1], WithinRel(std::exp(1.791759469228055 - kZ975 * 0.9052317076000179), 1e-7));
  REQUIRE_THAT(fit.ci_high[1], WithinRel(std::exp(1.791759469228055 + kZ975 * 0.9052317076000179), 1e-7));
}

TEST_CASE("continuous covariates reproduce a reference maximum likelihood fit") {
  // reference coefficients computed with an independent Newton solver
  const std::vector<double> x1 = {0.5, 1.2, 2.1, 0.8, 1.9, 2.5, 0.3, 1.1,
                                  2.8, 0.9, 1.4, 2.2, 0.6, 1.7, 2.9, 1.0,
                                  0.4, 2.0, 1.3, 2.6, 0.7, 1.8, 2.4, 1.5};
  const std::vector<double> x2 = {3, 1, 4, 2, 5, 6, 1, 2, 7, 3, 4, 5,
                                  2, 6, 8, 3, 1, 5, 4, 7, 2, 6, 5, 4};
  const std::vector<int> y = {0, 1, 0, 1, 1, 1, 0, 0, 1, 0, 1, 0,
                              1, 0, 1, 1, 0, 1, 0, 1, 0, 0, 1, 1};
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < y.size(); ++i) rows.push_back({x1[i], x2[i]});

  const LogisticFit fit = fit_logistic(rows, y, {"x1", "x2"});
  REQUIRE(fit.converged);
  REQUIRE(!fit.separation_suspected);
  REQUIRE_THAT(fit.beta[0], WithinAbs(-1.3980607708338362, 1e-6));
  REQUIRE_THAT(fit.beta[1], WithinAbs(2.2832469969678573, 1e-6));
  REQUIRE_THAT(fit.beta[2], WithinAbs(-0.467509241785963, 1e-6));
  REQUIRE_THAT(fit.se[0], WithinAbs(1.0490366986509512, 1e-6));
  REQUIRE_THAT(fit.se[1], WithinAbs(1.44671983301391, 1e-6));
  REQUIRE_THAT(fit.se[2], WithinAbs(0.5397193784719811, 1e-6));
  REQUIRE_THAT(fit.log_likelihood, WithinAbs(-14.059098604800175, 1e-9));
  REQUIRE_THAT(fit.p[1], WithinAbs(0.11451431163988626, 1e-8));
  REQUIRE_THAT(fit.p[2], WithinAbs(0.38637610865836425, 1e-8));
  REQUIRE_THAT(fit.odds_ratio[1], WithinRel(9.808476854719123, 1e-6));
  REQUIRE_THAT(fit.ci_low[1], WithinRel(0.5756405999443842, 1e-6));
  REQUIRE_THAT(fit.ci_high[1], WithinRel(167.1289659187621, 1e-6));
}

TEST_CASE("rank-deficient designs are rejected with the offending column") {
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (int i = 0; i < 12; ++i) {
    const double v = 0.3 * i;
    rows.push_back({v, 2.0 * v});  // second column is a multiple of the first
    y.push_back(i % 2);
  }
  REQUIRE_THROWS_WITH(fit_logistic(rows, y, {"fluid", "fluid_double"}),
                      ContainsSubstring("rank deficient"));
}

TEST_CASE("perfect separation is flagged") {
  std::vector<std::vector<double>> rows = {{-2.0}, {-1.5}, {-1.0}, {1.0}, {1.5}, {2.0}};
  const std::vector<int> y = {0, 0, 0, 1, 1, 1};
  const LogisticFit fit = fit_logistic(rows, y, {"x"});
  REQUIRE(fit.separation_suspected);
}

TEST_CASE("fit input validation") {
  REQUIRE_THROWS_AS(fit_logistic({}, {}, {}), std::invalid_argument);
  REQUIRE_THROWS_AS(fit_logistic({{1.0}}, {2}, {"x"}), std::invalid_argument);
  REQUIRE_THROWS_AS(fit_logistic({{1.0}, {1.0, 2.0}}, {0, 1}, {"x"}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(fit_logistic({{1.0}}, {0}, {"x", "extra"}), std::invalid_argument);
  REQUIRE_THROWS_AS(fit_logistic({{1.0}}, {0, 1}, {"x"}), std::invalid_argument);
}

TEST_CASE("treatment model assembles its design from the records") {
  Rng rng(57);
  std::vector<Episode> eps;
  for (int i = 0; i < 60; ++i) {
    const double fluid = rng.uniform(0.5, 6.0);
    const double delay = rng.uniform(0.0, 6.0);
    const double age = rng.uniform(40.0, 90.0);
    const double logit = -2.0 + 0.6 * fluid + 0.2 * delay;
    const bool death = rng.bernoulli(1.0 / (1.0 + std::exp(-logit)));
    eps.push_back(treated_episode(fluid, delay, age, death));
  }
  const TreatmentFit tf = treatment_model(eps, {"age"});
  REQUIRE(tf.n == 60);
  REQUIRE(!tf.non_estimable);
  REQUIRE(!tf.low_power);  // 60 >= 10 * 4 parameters
  REQUIRE(tf.terms == std::vector<std::string>{"iv_fluid_volume_l",
                                               "time_to_vasopressor_hours", "age"});
  REQUIRE(tf.fit.terms.size() == 4);
  REQUIRE(tf.fit.beta[1] > 0.0);  // more volume, higher mortality in this draw
}

TEST_CASE("treatment model resolves sofa6 from the score series") {
  std::vector<Episode> eps;
  for (int i = 0; i < 12; ++i) {
    Episode ep = treated_episode(1.0 + 0.5 * i, 0.5 + 0.4 * (i % 5), 70.0, i % 3 == 0);
    if (i != 5) ep.sofa = {{6, 4 + (i % 7)}};
    eps.push_back(ep);
  }
  const TreatmentFit tf = treatment_model(eps, {"sofa6"});
  REQUIRE(tf.dropped_missing_adjuster == 1);  // episode 5 has no hour-6 score
  REQUIRE(tf.n == 11);
  REQUIRE(tf.low_power);  // 11 < 10 * 4

  REQUIRE_THROWS_AS(treatment_model(eps, {"bmi"}), std::invalid_argument);

  Episode bare;
  REQUIRE_THROWS_AS(treatment_model({bare}, {}), std::invalid_argument);
}

TEST_CASE("one-sided outcomes are reported as non-estimable") {
  std::vector<Episode> all_survive;
  for (int i = 0; i < 15; ++i) {
    all_survive.push_back(treated_episode(1.0 + i * 0.1, 1.0, 60.0, false));
  }
  const TreatmentFit tf = treatment_model(all_survive, {"age"});
  REQUIRE(tf.non_estimable);
  REQUIRE(tf.fit.beta.empty());

  const TreatmentFit empty = treatment_model({}, {"age"});
  REQUIRE(empty.non_estimable);
  REQUIRE(empty.n == 0);
}
