#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "flowkl/estimators.hpp"
#include "flowkl/gaussian_paths.hpp"
#include "flowkl/quadrature.hpp"
#include "support.hpp"

using namespace flowkl;

namespace {

McConfig fast_config(std::uint64_t seed = 11) {
  McConfig cfg;
  cfg.n = 5000;
  cfg.seed = seed;
  return cfg;
}

bool within(double estimate, double se, double target) {
  return std::abs(estimate - target) <= 3.0 * se + kSolverAllowance;
}

// KL(N(0, r I) || N(0, I)) in two dimensions, with r the variance ratio.
double kl_2d(double r) { return r - 1.0 - std::log(r); }

}  // namespace

TEST_CASE("mean and standard error") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const Estimate e = mean_and_stderr(v);
  CHECK(e.value == 2.5);
  CHECK(e.std_error == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
  CHECK_THROWS_AS(mean_and_stderr(std::vector<double>{1.0}), std::invalid_argument);
  McConfig bad;
  bad.n = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("kl_mc: equal paths give zero") {
  const McConfig cfg = fast_config();
  const Estimate e = kl_mc(Schedule::a1(), LinearField(Schedule::a1(), 2), 0.7, cfg);
  CHECK(e.std_error >= 0.0);
  CHECK(within(e.value, e.std_error, 0.0));
  CHECK(std::abs(e.value) < 1e-6);
  const Estimate zero = kl_mc(Schedule::a1(), LinearField(Schedule::a3(), 2), 0.0, cfg);
  CHECK(zero.value == 0.0);
  CHECK(zero.std_error == 0.0);
}

TEST_CASE("kl_mc: A1 against A3 at t = 1") {
  const Estimate e = kl_mc(Schedule::a1(), LinearField(Schedule::a3(), 2), 1.0, fast_config());
  // A1(1) = 2 / pi and A3(1) = 0.
  const double target = kl_2d(std::exp(4.0 / std::numbers::pi));
  CHECK(target == doctest::Approx(1.29917).epsilon(1e-5));
  CHECK(within(e.value, e.std_error, target));
}

TEST_CASE("identity_integrand: closed form and degenerate cases") {
  const McConfig cfg = fast_config();
  // t = 1/2: a1 = 1, a3 = 0, A1 = 1/pi, A3 = -1/8.
  const double target = 2.0 * (std::exp(0.25 + 2.0 / std::numbers::pi) - 1.0);
  const Estimate g = identity_integrand(Schedule::a1(), LinearField(Schedule::a3(), 2), 0.5, cfg);
  CHECK(within(g.value, g.std_error, target));

  const Estimate same =
      identity_integrand(Schedule::a2(), LinearField(Schedule::a2(), 2), 0.5, cfg);
  CHECK(within(same.value, same.std_error, 0.0));

  // u - v is a nonzero rotation while the scores coincide.
  const flowkl::testing::RotatedField rotated(Schedule::a1(), 0.8);
  const Estimate orth = identity_integrand(Schedule::a1(), rotated, 0.6, cfg);
  CHECK(within(orth.value, orth.std_error, 0.0));
  const PathEstimate eps = flow_error(Schedule::a1(), rotated, cfg);
  CHECK(eps.total > 0.5);
}

TEST_CASE("identity_curves: analytic pair tracks the closed form") {
  const McConfig cfg = fast_config();
  const EstimatorReport r = identity_curves(Schedule::a1(), LinearField(Schedule::a3(), 2), cfg);
  CHECK(r.all_tracking());
  CHECK(r.cum_integral.front() == 0.0);
  for (std::size_t k = 0; k < r.t.size(); ++k) {
    CHECK(r.kl_se[k] >= 0.0);
    CHECK(r.g_se[k] >= 0.0);
    CHECK(r.cum_se[k] >= 0.0);
  }
  const IdentityCurves exact =
      closed_form_identity_curves(Schedule::a1(), Schedule::a3(), cfg.grid, 2);
  for (std::size_t k : {std::size_t{10}, std::size_t{20}}) {
    CHECK(within(r.kl_hat[k], r.kl_se[k], exact.kl[k]));
    CHECK(within(r.g_hat[k], r.g_se[k], exact.integrand[k]));
  }
  // Cauchy-Schwarz: |cum(1)| <= eps sqrt(S) + 3 se.
  const EstimatorReport b = bound_check(Schedule::a1(), LinearField(Schedule::a3(), 2), cfg);
  CHECK(std::abs(r.cum_integral.back()) <=
        b.bound_rhs + 3.0 * std::hypot(r.cum_se.back(), b.bound_rhs_se));
}

TEST_CASE("identity_curves: equal paths stay at zero") {
  const EstimatorReport r =
      identity_curves(Schedule::a2(), LinearField(Schedule::a2(), 2), fast_config());
  CHECK(r.all_tracking());
  for (std::size_t k = 0; k < r.t.size(); ++k) {
    CHECK(std::abs(r.kl_hat[k]) < 1e-6);
    CHECK(std::abs(r.cum_integral[k]) < 1e-6);
  }
}

TEST_CASE("flow_error on a perturbed A3 field") {
  const McConfig cfg = fast_config();
  const double beta = 0.1;
  const PathEstimate eps = flow_error(Schedule::a3(), perturbed_field(Schedule::a3(), beta), cfg);
  CHECK(within(eps.per_point.back(), eps.per_point_se.back(), std::sqrt(0.02)));
  // Quadrature of beta^2 d sigma_p(t)^2 on the same grid.
  std::vector<double> closed(cfg.grid.count());
  for (std::size_t k = 0; k < closed.size(); ++k) {
    const double t = cfg.grid[k];
    closed[k] = beta * beta * 2.0 * std::exp(t * t - t);
  }
  double quad = 0.0;
  for (std::size_t k = 0; k + 1 < closed.size(); ++k) {
    quad += 0.5 * cfg.grid.spacing() * (closed[k] + closed[k + 1]);
  }
  CHECK(within(eps.total, eps.total_se, std::sqrt(quad)));

  const PathEstimate none = flow_error(Schedule::a3(), LinearField(Schedule::a3(), 2), cfg);
  CHECK(none.total == 0.0);
}

TEST_CASE("score_gap on a perturbed A3 field") {
  const McConfig cfg = fast_config();
  const PathEstimate gap = score_gap(Schedule::a3(), perturbed_field(Schedule::a3(), 0.1), cfg);
  // d sigma_p^2 (1/sigma_p^2 - 1/sigma_q^2)^2 at t = 1 with sigma_p = 1, sigma_q = e^0.1.
  const double target = 2.0 * std::pow(1.0 - std::exp(-0.2), 2);
  CHECK(target == doctest::Approx(0.06572).epsilon(1e-4));
  CHECK(within(gap.per_point.back(), gap.per_point_se.back(), target));
  CHECK(gap.per_point.front() == 0.0);

  const PathEstimate same = score_gap(Schedule::a3(), LinearField(Schedule::a3(), 2), cfg);
  CHECK(same.total < 1e-12);
}

TEST_CASE("bound_check on perturbed A3 fields") {
  const McConfig cfg = fast_config();
  const EstimatorReport zero = bound_check(Schedule::a3(), perturbed_field(Schedule::a3(), 0.0), cfg);
  CHECK(zero.satisfied);
  CHECK(zero.eps_total == 0.0);
  CHECK(std::abs(zero.kl_terminal) < 1e-6);
  CHECK(std::abs(zero.bound_rhs) < 1e-6);

  const EstimatorReport r = bound_check(Schedule::a3(), perturbed_field(Schedule::a3(), 0.2), cfg);
  CHECK(r.satisfied);
  CHECK(within(r.kl_terminal, r.kl_terminal_se, kl_2d(std::exp(-0.4))));
  CHECK(r.propagated_se >= r.kl_terminal_se);
}

TEST_CASE("bound constants") {
  const TimeGrid grid(201);
  const BoundConstants zero = bound_constants(RegularityProfile::constant(0.0), grid);
  CHECK(zero.A1 == 0.0);
  CHECK(zero.A2 == 0.0);
  const BoundConstants ones = bound_constants(RegularityProfile::constant(1.0), grid);
  // Direct substitution: the exponent integrates L + K + B_p M = 3.
  const double e3 = std::exp(3.0);
  CHECK(std::abs(ones.A1 - 4.0 * e3) < 1e-6);
  CHECK(std::abs(ones.A2 - e3) < 1e-6);

  // A pointwise bump in any one function never decreases either constant.
  const auto bump = [](double t) { return 1.0 + std::exp(-100.0 * (t - 0.3) * (t - 0.3)); };
  for (int which = 0; which < 6; ++which) {
    RegularityProfile r = RegularityProfile::constant(1.0);
    std::function<double(double)>* slots[] = {&r.L, &r.K, &r.B_p, &r.M, &r.H, &r.U_p};
    *slots[which] = bump;
    const BoundConstants c = bound_constants(r, grid);
    CHECK(c.A1 >= ones.A1);
    CHECK(c.A2 >= ones.A2);
  }
  RegularityProfile neg = RegularityProfile::constant(1.0);
  neg.H = [](double) { return -1.0; };
  CHECK_THROWS_AS(bound_constants(neg, grid), std::domain_error);
}

TEST_CASE("tv_from_kl") {
  CHECK(tv_from_kl(0.0) == 0.0);
  CHECK(tv_from_kl(2.0) == 1.0);
  CHECK(tv_from_kl(1.29908) == doctest::Approx(0.80594).epsilon(1e-5));
  CHECK_THROWS_AS(tv_from_kl(-1e-3), std::domain_error);
}

TEST_CASE("common random numbers reproduce estimates bitwise") {
  McConfig cfg = fast_config(5);
  cfg.n = 500;
  const LinearField q(Schedule::a3(), 2);
  const EstimatorReport a = identity_curves(Schedule::a1(), q, cfg);
  const EstimatorReport b = identity_curves(Schedule::a1(), q, cfg);
  CHECK(a.kl_hat == b.kl_hat);
  CHECK(a.g_hat == b.g_hat);
  CHECK(a.cum_integral == b.cum_integral);
  McConfig other = cfg;
  other.seed = 6;
  CHECK(identity_curves(Schedule::a1(), q, other).kl_hat != a.kl_hat);
}
