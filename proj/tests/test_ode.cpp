#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "flowkl/counterexample.hpp"
#include "flowkl/derivatives.hpp"
#include "flowkl/errors.hpp"
#include "flowkl/gaussian_paths.hpp"
#include "flowkl/mlp.hpp"
#include "flowkl/ode.hpp"
#include "flowkl/rng.hpp"
#include "support.hpp"

using namespace flowkl;

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_CASE("step counts scale with the span") {
  const IvpConfig cfg{200, Direction::Forward};
  CHECK(step_count(cfg, 0.0, 1.0) == 200);
  CHECK(step_count(cfg, 0.0, 0.5) == 100);
  CHECK(step_count(cfg, 0.0, 0.001) == 1);
  CHECK(step_count(cfg, 0.3, 0.3) == 0);
}

TEST_CASE("zero field leaves points and densities unchanged") {
  const ZeroField zero(2);
  const std::vector<double> x{0.4, -1.1};
  const Eigen::VectorXd y = rk4_solve(zero, x, 0.0, 1.0, {});
  CHECK(y(0) == x[0]);
  CHECK(y(1) == x[1]);
  const LogDensityResult r =
      backward_logdensity(zero, x, 0.7, {200, Direction::Backward});
  CHECK(r.log_q == doctest::Approx(gaussian_log_density(x, 1.0)).epsilon(1e-14));
  CHECK(r.ell == 0.0);
}

TEST_CASE("direction must match the interval") {
  const ZeroField zero(2);
  const std::vector<double> x{0.0, 0.0};
  CHECK_THROWS_AS(rk4_solve(zero, x, 0.0, 1.0, {200, Direction::Backward}),
                  std::invalid_argument);
  CHECK_THROWS_AS(rk4_solve(zero, x, 1.0, 0.0, {200, Direction::Forward}),
                  std::invalid_argument);
}

TEST_CASE("linear fields follow x0 exp(A(t))") {
  const std::vector<double> x{0.8, -0.5};
  for (const Schedule& s : {Schedule::a1(), Schedule::a2(), Schedule::a3()}) {
    const LinearField f(s, 2);
    const Eigen::VectorXd y = rk4_solve(f, x, 0.0, 1.0, {});
    const double g = std::exp(s.rate_integral(1.0));
    CHECK(std::abs(y(0) - g * x[0]) < 1e-8);
    CHECK(std::abs(y(1) - g * x[1]) < 1e-8);
    const Eigen::VectorXd back =
        rk4_solve(f, to_vec(y), 1.0, 0.0, {200, Direction::Backward});
    CHECK(std::abs(back(0) - x[0]) < 1e-8);
    CHECK(std::abs(back(1) - x[1]) < 1e-8);
  }
  // A3 integrates to zero over [0, 1], so its flow map is the identity at t = 1.
  const Eigen::VectorXd y = rk4_solve(LinearField(Schedule::a3(), 2), x, 0.0, 1.0, {});
  CHECK(std::abs(y(0) - x[0]) < 1e-8);
}

TEST_CASE("rk4 converges at fourth order") {
  const LinearField f(Schedule::a1(), 2);
  const std::vector<double> x{1.0, 0.0};
  const double exact = std::exp(Schedule::a1().rate_integral(1.0));
  const auto err = [&](std::size_t n) {
    return std::abs(rk4_solve(f, x, 0.0, 1.0, {n, Direction::Forward})(0) - exact);
  };
  const double order = std::log2(err(10) / err(20));
  CHECK(order >= 3.5);
  CHECK(order <= 4.5);
}

TEST_CASE("log-density of a linear path matches the Gaussian closed form") {
  const RandomStream rng(17);
  for (const Schedule& s : {Schedule::a1(), Schedule::a2(), Schedule::a3()}) {
    const LinearField f(s, 2);
    for (std::uint64_t i = 0; i < 20; ++i) {
      const double t = rng.uniform(i, 0);
      const std::vector<double> x{-3.0 + 6.0 * rng.uniform(i, 1), -3.0 + 6.0 * rng.uniform(i, 2)};
      const LogDensityResult r = backward_logdensity(f, x, t, {200, Direction::Backward});
      CHECK(std::abs(r.log_q - gaussian_log_density(x, sigma_p(s, t))) < 1e-4);
      // ell = -2 A(t) for a 2-d linear field.
      CHECK(std::abs(r.ell + 2.0 * s.rate_integral(t)) < 1e-8);
    }
  }
}

TEST_CASE("scores of linear paths match -x / sigma^2") {
  const RandomStream rng(18);
  for (const Schedule& s : {Schedule::a1(), Schedule::a2()}) {
    const LinearField f(s, 2);
    for (std::uint64_t i = 0; i < 20; ++i) {
      const double t = rng.uniform(i, 0);
      const std::vector<double> x{-3.0 + 6.0 * rng.uniform(i, 1), -3.0 + 6.0 * rng.uniform(i, 2)};
      const ScoreResult r = backward_score(f, x, t, {200, Direction::Backward});
      const Eigen::VectorXd exact = analytic_score(GaussianPathState::at(s, t, 2), x);
      CHECK((r.score - exact).norm() < 1e-4);
    }
  }
}

TEST_CASE("score and sensitivity agree with finite differences on a neural field") {
  const MlpVelocity net = MlpVelocity::init(MlpVelocity::default_widths(), 3);
  const IvpConfig cfg{100, Direction::Backward};
  const RandomStream rng(19);
  for (std::uint64_t i = 0; i < 5; ++i) {
    const double t = 0.2 + 0.8 * rng.uniform(i, 0);
    const std::vector<double> x{-2.0 + 4.0 * rng.uniform(i, 1), -2.0 + 4.0 * rng.uniform(i, 2)};
    const ScoreResult r = backward_score(net, x, t, cfg);
    CHECK(r.log_q == doctest::Approx(backward_logdensity(net, x, t, cfg).log_q).epsilon(1e-12));

    Eigen::VectorXd fd_score(2);
    Eigen::MatrixXd fd_sens(2, 2);
    for (int j = 0; j < 2; ++j) {
      const double h = 1e-5;
      std::vector<double> xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const LogDensityResult lp = backward_logdensity(net, xp, t, cfg);
      const LogDensityResult lm = backward_logdensity(net, xm, t, cfg);
      fd_score(j) = (lp.log_q - lm.log_q) / (2 * h);
      fd_sens.col(j) = (lp.x0 - lm.x0) / (2 * h);
    }
    CHECK((r.score - fd_score).norm() < 1e-5 * std::max(1.0, fd_score.norm()));
    CHECK((r.sensitivity - fd_sens).norm() < 1e-6 * std::max(1.0, fd_sens.norm()));

    const Eigen::VectorXd oracle = score_transport_oracle(net, x, t, cfg);
    CHECK((r.score - oracle).norm() < 1e-6);
  }
}

TEST_CASE("score matches the transport oracle on an analytic nonlinear field") {
  const flowkl::testing::MixedField mixed;
  const IvpConfig cfg{200, Direction::Backward};
  const std::vector<double> x{0.3, 0.9};
  const ScoreResult r = backward_score(mixed, x, 0.8, cfg);
  CHECK((r.score - score_transport_oracle(mixed, x, 0.8, cfg)).norm() < 1e-6);
}

TEST_CASE("translation from a tilted base reproduces the shifted Gaussian") {
  const CounterexampleInstance inst = build_counterexample({1.0, 0.01, {1.0, 0.0}, 0.5});
  const auto v = inst.v_field();
  const BaseDensity base = inst.tilted_base();
  const IvpConfig cfg{200, Direction::Backward};
  const double a1 = inst.a(1.0);
  for (const std::vector<double>& x :
       {std::vector<double>{0.0, 0.0}, {-14.0, 1.0}, {2.5, -0.7}}) {
    const LogDensityResult r = backward_logdensity(*v, x, 1.0, cfg, base);
    // x_tau = x + delta b int_tau^1 a = x + (a(1) - eta) b.
    CHECK(std::abs(r.x0(0) - (x[0] + a1 - inst.eta)) < 1e-9);
    CHECK(r.x0(1) == x[1]);
    const std::vector<double> centered{x[0] + a1, x[1]};
    CHECK(std::abs(r.log_q - gaussian_log_density(centered, 1.0)) < 1e-8);
    const ScoreResult sr = backward_score(*v, x, 1.0, cfg, base);
    CHECK(std::abs(sr.score(0) + centered[0]) < 1e-8);
    CHECK(std::abs(sr.score(1) + centered[1]) < 1e-12);
  }
}

TEST_CASE("learned-style density integrates to one") {
  const Schedule s = Schedule::a2();
  const LinearField f(s, 2);
  const double t = 0.6;
  const double sigma = sigma_p(s, t);
  const int n = 81;
  const double lo = -8.0 * sigma, h = 16.0 * sigma / (n - 1);
  double mass = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const std::vector<double> x{lo + i * h, lo + j * h};
      const double w = (i == 0 || i == n - 1 ? 0.5 : 1.0) * (j == 0 || j == n - 1 ? 0.5 : 1.0);
      mass += w * std::exp(backward_logdensity(f, x, t, {200, Direction::Backward}).log_q);
    }
  }
  CHECK(std::abs(mass * h * h - 1.0) < 1e-3);
}

TEST_CASE("non-finite trajectories raise NumericError") {
  const TranslationField bad([](double t) { return t > 0.5 ? std::nan("") : 1.0; }, {1.0, 0.0});
  const std::vector<double> x{0.0, 0.0};
  CHECK_THROWS_AS(rk4_solve(bad, x, 0.0, 1.0, {}), NumericError);
}

TEST_CASE("batched solves agree with per-point solves") {
  const MlpVelocity net = MlpVelocity::init(MlpVelocity::default_widths(), 12);
  const flowkl::testing::MixedField mixed;
  const IvpConfig cfg{200, Direction::Backward};
  Eigen::MatrixXd x(2, 4);
  x << 0.1, -1.5, 2.0, 0.7, 0.4, 0.9, -1.1, 0.0;
  for (const VelocityField* f : {static_cast<const VelocityField*>(&net),
                                 static_cast<const VelocityField*>(&mixed)}) {
    const BatchResult dens = backward_batch(*f, x, 0.9, cfg, false);
    const BatchResult full = backward_batch(*f, x, 0.9, cfg, true);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const std::vector<double> xc{x(0, c), x(1, c)};
      const ScoreResult r = backward_score(*f, xc, 0.9, cfg);
      CHECK(std::abs(dens.log_q(c) - r.log_q) < 1e-10);
      CHECK(std::abs(full.log_q(c) - r.log_q) < 1e-10);
      CHECK((full.score.col(c) - r.score).norm() < 1e-10);
      CHECK((full.x0.col(c) - r.x0).norm() < 1e-12);
    }
  }
  // At the base time the batch returns the base density untouched.
  const BatchResult at_base = backward_batch(net, x, 0.0, cfg, true);
  CHECK(at_base.x0 == x);
  CHECK(std::abs(at_base.score(0, 1) + x(0, 1)) == 0.0);
}
