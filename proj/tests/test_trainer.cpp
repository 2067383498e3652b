#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "flowkl/errors.hpp"
#include "flowkl/gaussian_paths.hpp"
#include "flowkl/io.hpp"
#include "flowkl/rng.hpp"
#include "flowkl/trainer.hpp"

using namespace flowkl;

namespace {

TrainConfig short_config(std::size_t steps, std::vector<double> ladder = {}) {
  TrainConfig cfg;
  cfg.max_steps = steps;
  cfg.lr.total_steps = steps;
  cfg.lr.warmup_steps = std::min<std::size_t>(500, steps / 10);
  cfg.val_n = 512;
  cfg.ladder = std::move(ladder);
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  const CosineSchedule lr;
  CHECK(lr.at(0) == doctest::Approx(1e-3 / 500));
  CHECK(lr.at(499) == doctest::Approx(1e-3));
  CHECK(lr.at(20000) == doctest::Approx(1e-5));
  for (std::size_t s = 500; s < 20000; s += 250) CHECK(lr.at(s + 250) <= lr.at(s));
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.ladder = {0.1, 0.1};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.ladder = {0.1, -0.2};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.ladder = {0.5, 0.2};
  CHECK_NOTHROW(cfg.validate());
  CHECK_THROWS_AS((ClipWindow{0.5, 0.5}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((ClipWindow{-0.1, 0.9}.validate()), std::invalid_argument);
}

TEST_CASE("Adam with vanishing learning rate leaves parameters fixed") {
  std::vector<double> p{0.3, -1.2, 4.0};
  const std::vector<double> g{10.0, -0.001, 3.0};
  Adam zero(3);
  zero.step(p, g, 0.0);
  CHECK(p == std::vector<double>{0.3, -1.2, 4.0});
  Adam tiny(3);
  tiny.step(p, g, 1e-15);
  CHECK(std::abs(p[0] - 0.3) <= 1e-12);
  CHECK(std::abs(p[1] + 1.2) <= 1e-12);
  CHECK(std::abs(p[2] - 4.0) <= 1e-12);
  // First step moves each coordinate by lr against the gradient sign.
  Adam one(3);
  std::vector<double> q{0.0, 0.0, 0.0};
  one.step(q, g, 0.01);
  CHECK(q[0] == doctest::Approx(-0.01));
  CHECK(q[1] == doctest::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("cfm_target") {
  const AffineSchedule lin = AffineSchedule::linear();
  const std::vector<double> x1{2.0, 0.0}, x0{0.0, 0.0};
  const CfmSample s = cfm_target(lin, x1, x0, 0.25);
  CHECK(s.x_t(0) == 0.5);
  CHECK(s.x_t(1) == 0.0);
  CHECK(s.target(0) == 2.0);
  CHECK(s.target(1) == 0.0);
  CHECK_THROWS_AS(cfm_target(lin, x1, x0, 1.5), std::domain_error);

  const std::vector<double> a{1.3, -0.4}, b{-2.2, 0.9};
  for (const AffineSchedule& as : {AffineSchedule::linear(), AffineSchedule::trigonometric()}) {
    const CfmSample at0 = cfm_target(as, a, b, 0.0);
    const CfmSample at1 = cfm_target(as, a, b, 1.0);
    for (Eigen::Index i = 0; i < 2; ++i) {
      CHECK(at0.x_t(i) == b[static_cast<std::size_t>(i)]);
      CHECK(at1.x_t(i) == a[static_cast<std::size_t>(i)]);
    }
    for (double t = 0.05; t < 1.0; t += 0.05) {
      CHECK(as.dmu(t) > 0.0);
      CHECK(as.dsigma(t) < 0.0);
    }
  }
}

TEST_CASE("validation_mse closed forms") {
  const TimeGrid grid(21);
  const Schedule a1 = Schedule::a1();
  CHECK(validation_mse(LinearField(a1, 2), a1, grid, 256, 1) == 0.0);

  const std::size_t n = 20000;
  const double mse = validation_mse(ZeroField(2), a1, grid, n, 1);
  double closed = 0.0;
  for (double t : grid.points()) {
    const double a = std::sin(std::numbers::pi * t);
    closed += a * a * 2.0 * std::exp(2.0 * (1.0 - std::cos(std::numbers::pi * t)) / std::numbers::pi);
  }
  closed /= static_cast<double>(grid.count());
  // Common normals make the estimate closed * mean(|z|^2) / 2, with relative sd 1/sqrt(n).
  CHECK(std::abs(mse / closed - 1.0) <= 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("zero target: zero network is already optimal") {
  const TrainResult r =
      train_direct_fm(Schedule::zero(), MlpVelocity::zeros(MlpVelocity::default_widths()),
                      short_config(2000, {0.5, 0.2, 0.1, 0.05, 0.02, 0.01}));
  CHECK(r.final.val_mse < 1e-3);
  CHECK(r.final.step <= 2000);
  REQUIRE(r.ladder.size() == 1);
  CHECK(r.ladder.front().val_mse == 0.0);
  for (const auto& row : r.log) CHECK(row.train_loss < 1e-3);
}

TEST_CASE("direct training on A2 reaches 0.05 and is deterministic") {
  TrainConfig cfg;
  cfg.seed = 7;
  cfg.ladder = {0.05};
  const MlpVelocity init = MlpVelocity::init(MlpVelocity::default_widths(), 7);
  const TrainResult a = train_direct_fm(Schedule::a2(), init, cfg);
  const TrainResult b = train_direct_fm(Schedule::a2(), init, cfg);
  REQUIRE(a.ladder.size() == 1);
  CHECK(a.ladder.front().val_mse <= 0.05);
  CHECK(a.ladder.front().step <= 20000);
  CHECK(a.final.params == b.final.params);
  CHECK(a.final.schedule_id == "a2");
  // Independent check of the reported validation error with a fresh probe set.
  const double fresh = validation_mse(a.final, Schedule::a2(), TimeGrid(21), 4096, 99);
  CHECK(fresh < 0.06);
}

TEST_CASE("ladder on A1: strictly decreasing and written to disk") {
  const TrainResult r = train_direct_fm(
      Schedule::a1(), MlpVelocity::init(MlpVelocity::default_widths(), 1), TrainConfig{});
  REQUIRE(r.ladder.size() >= 2);
  for (std::size_t i = 1; i < r.ladder.size(); ++i) {
    CHECK(r.ladder[i].val_mse < r.ladder[i - 1].val_mse);
    CHECK(r.ladder[i].step > r.ladder[i - 1].step);
  }
  CHECK(r.ladder.back().val_mse <= 0.01);

  const std::string dir =
      (std::filesystem::temp_directory_path() / "flowkl_test_run_a1").string();
  std::filesystem::remove_all(dir);
  write_run_directory(dir, {"direct", "a1", MlpVelocity::default_widths(), TrainConfig{}}, r);
  const std::vector<Checkpoint> loaded = load_run_ladder(dir);
  REQUIRE(loaded.size() == r.ladder.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].params == r.ladder[i].params);
    CHECK(loaded[i].val_mse == r.ladder[i].val_mse);
  }
  const std::string log = read_file(dir + "/train_log.csv");
  CHECK(log.rfind("step,train_loss,val_mse,lr\n", 0) == 0);
  CHECK(read_file(dir + "/manifest.json").find("\"widths\"") != std::string::npos);
  CHECK_THROWS_AS(load_run_ladder(dir + "/missing"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("final validation above the first threshold is a training error") {
  TrainConfig cfg = short_config(50, {1e-9});
  cfg.val_every = 25;
  CHECK_THROWS_AS(
      train_direct_fm(Schedule::a1(), MlpVelocity::init(MlpVelocity::default_widths(), 2), cfg),
      TrainingError);
}

TEST_CASE("affine CFM: single point at the origin") {
  // With x1 = 0 and the linear schedule, x_t = (1 - t) x0 and the marginal
  // velocity is u(x, t) = -x / (1 - t).
  const Eigen::MatrixXd data = Eigen::MatrixXd::Zero(1, 2);
  TrainConfig cfg = short_config(4000);
  cfg.val_n = 128;
  const TrainResult r = train_affine_cfm(data, AffineSchedule::linear(), ClipWindow{},
                                         MlpVelocity::init(MlpVelocity::default_widths(), 5), cfg);
  const MlpVelocity net = r.final.network();
  const RandomStream probes(123);
  for (double t : {0.0, 0.2, 0.4, 0.6, 0.8}) {
    double err = 0.0, ref = 0.0;
    for (std::uint64_t i = 0; i < 256; ++i) {
      std::vector<double> x(2);
      probes.normals(i, x);
      for (double& c : x) c *= 1.0 - t;
      const Eigen::VectorXd v = mlp_forward(net, x, t);
      for (Eigen::Index k = 0; k < 2; ++k) {
        const double u = -x[static_cast<std::size_t>(k)] / (1.0 - t);
        err += (v(k) - u) * (v(k) - u);
        ref += u * u;
      }
    }
    CHECK(std::sqrt(err / ref) <= 0.1);
  }
}

TEST_CASE("affine CFM: clipped training stays finite and is deterministic") {
  const RandomStream rng(4);
  Eigen::MatrixXd data(50, 2);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    std::vector<double> z(2);
    rng.normals(static_cast<std::uint64_t>(i), z);
    data(i, 0) = 2.0 + 0.3 * z[0];
    data(i, 1) = -1.0 + 0.3 * z[1];
  }
  TrainConfig cfg = short_config(300);
  cfg.val_n = 64;
  const MlpVelocity init = MlpVelocity::init(MlpVelocity::default_widths(), 6);
  const TrainResult a = train_affine_cfm(data, AffineSchedule::trigonometric(),
                                         ClipWindow{0.01, 0.99}, init, cfg);
  for (const auto& row : a.log) {
    CHECK(std::isfinite(row.train_loss));
    CHECK(std::isfinite(row.val_mse));
  }
  const TrainResult b = train_affine_cfm(data, AffineSchedule::trigonometric(),
                                         ClipWindow{0.01, 0.99}, init, cfg);
  CHECK(a.final.params == b.final.params);
  CHECK_THROWS_AS(train_affine_cfm(Eigen::MatrixXd(0, 2), AffineSchedule::linear(), ClipWindow{},
                                   init, cfg),
                  std::invalid_argument);
}
