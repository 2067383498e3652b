#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "flowkl/checkpoint.hpp"
#include "flowkl/errors.hpp"
#include "flowkl/mlp.hpp"
#include "flowkl/rng.hpp"

using namespace flowkl;

namespace {

Batch random_batch(std::size_t n, std::uint64_t seed) {
  const RandomStream rng(seed);
  Batch b;
  b.x.resize(2, static_cast<Eigen::Index>(n));
  b.target.resize(2, static_cast<Eigen::Index>(n));
  b.t.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    b.x(0, c) = -2.0 + 4.0 * rng.uniform(i, 0);
    b.x(1, c) = -2.0 + 4.0 * rng.uniform(i, 1);
    b.target(0, c) = -1.0 + 2.0 * rng.uniform(i, 2);
    b.target(1, c) = -1.0 + 2.0 * rng.uniform(i, 3);
    b.t[i] = rng.uniform(i + n, 0);
  }
  return b;
}

}  // namespace

TEST_CASE("parameter counts and widths") {
  // (3+1)*64 + 2*(64+1)*64 + (64+1)*2
  constexpr std::size_t expected = 4 * 64 + 2 * 65 * 64 + 65 * 2;
  static_assert(expected == 8706);
  CHECK(MlpVelocity::param_count(MlpVelocity::default_widths()) == expected);
  CHECK(MlpVelocity::init(MlpVelocity::default_widths(), 0).param_count() == expected);
  CHECK_THROWS_AS(MlpVelocity::init({3, 8, 3}, 0), std::invalid_argument);
  CHECK_THROWS_AS(MlpVelocity::zeros({2}), std::invalid_argument);
  CHECK_THROWS_AS(MlpVelocity({3, 2}, std::vector<double>(7, 0.0)), std::invalid_argument);
  std::vector<double> bad(8, 0.0);
  bad[3] = std::nan("");
  CHECK_THROWS_AS(MlpVelocity({3, 2}, bad), NumericError);
}

TEST_CASE("initialization is deterministic and scaled") {
  const MlpVelocity a = MlpVelocity::init(MlpVelocity::default_widths(), 42);
  const MlpVelocity b = MlpVelocity::init(MlpVelocity::default_widths(), 42);
  const MlpVelocity c = MlpVelocity::init(MlpVelocity::default_widths(), 43);
  CHECK(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
  CHECK(!std::equal(a.params().begin(), a.params().end(), c.params().begin()));
  // First layer: 64 x 3 weights within 1/sqrt(3), then 64 zero biases.
  for (std::size_t k = 0; k < 192; ++k) CHECK(std::abs(a.params()[k]) <= 1.0 / std::sqrt(3.0));
  for (std::size_t k = 192; k < 256; ++k) CHECK(a.params()[k] == 0.0);
}

TEST_CASE("zero network and single linear layer") {
  const MlpVelocity zero = MlpVelocity::zeros(MlpVelocity::default_widths());
  const std::vector<double> x{1.5, -0.2};
  const Eigen::VectorXd out = mlp_forward(zero, x, 0.3);
  CHECK(out.isZero(0.0));

  // W = [[1, 2, 3], [4, 5, 6]], b = 0.
  const MlpVelocity lin({3, 2}, {1, 2, 3, 4, 5, 6, 0, 0});
  const Eigen::VectorXd y = mlp_forward(lin, x, 0.5);
  CHECK(y(0) == 1.5 - 0.4 + 1.5);
  CHECK(y(1) == 6.0 - 1.0 + 3.0);
}

TEST_CASE("batched forward agrees with the scalar path") {
  const MlpVelocity net = MlpVelocity::init(MlpVelocity::default_widths(), 9);
  const Batch b = random_batch(32, 1);
  const Eigen::MatrixXd out = net.forward_batch(b.x, b.t);
  for (Eigen::Index c = 0; c < b.x.cols(); ++c) {
    const std::vector<double> x{b.x(0, c), b.x(1, c)};
    const auto i = static_cast<std::size_t>(c);
    CHECK((mlp_forward(net, x, b.t[i]) - out.col(c)).norm() < 1e-13);
  }
}

TEST_CASE("dual probe along e1 matches finite differences") {
  const MlpVelocity net = MlpVelocity::init(MlpVelocity::default_widths(), 10);
  const std::vector<double> x{0.4, -0.9};
  std::vector<Dual> dx{Dual(x[0], 1.0), Dual(x[1], 0.0)}, dout(2);
  net.evaluate(std::span<const Dual>(dx), 0.6, std::span<Dual>(dout));
  const double h = 1e-5;
  const Eigen::VectorXd fp = mlp_forward(net, std::vector<double>{x[0] + h, x[1]}, 0.6);
  const Eigen::VectorXd fm = mlp_forward(net, std::vector<double>{x[0] - h, x[1]}, 0.6);
  for (Eigen::Index k = 0; k < 2; ++k) {
    CHECK(std::abs(dout[static_cast<std::size_t>(k)].tangent - (fp(k) - fm(k)) / (2 * h)) < 1e-8);
  }
}

TEST_CASE("loss gradient: exact cases") {
  const Batch b = random_batch(8, 2);
  CHECK_THROWS_AS(mlp_loss_grad(MlpVelocity::zeros({3, 4, 2}), Batch{}), std::invalid_argument);

  // Targets equal to outputs.
  const MlpVelocity net = MlpVelocity::init({3, 4, 2}, 3);
  Batch fit = b;
  fit.target = net.forward_batch(b.x, b.t);
  const LossGrad zero = mlp_loss_grad(net, fit);
  CHECK(zero.loss == 0.0);
  for (double g : zero.grad) CHECK(g == 0.0);

  // One active parameter: v_0 = w x_0, target 0, so loss = mean(w^2 x0^2) and
  // dloss/dw = 2 w mean(x0^2).
  std::vector<double> p(8, 0.0);
  p[0] = 0.7;
  const MlpVelocity single({3, 2}, p);
  Batch z = b;
  z.target.setZero();
  const LossGrad lg = mlp_loss_grad(single, z);
  const double mean_sq = b.x.row(0).squaredNorm() / 8.0;
  CHECK(lg.loss == doctest::Approx(0.49 * mean_sq));
  CHECK(lg.grad[0] == doctest::Approx(1.4 * mean_sq));
}

TEST_CASE("loss gradient matches central differences in random directions") {
  const MlpVelocity net = MlpVelocity::init({3, 8, 2}, 4);
  const Batch b = random_batch(16, 5);
  const LossGrad lg = mlp_loss_grad(net, b);
  const RandomStream rng(77);
  const std::size_t np = net.param_count();
  for (std::uint64_t dir = 0; dir < 20; ++dir) {
    std::vector<double> u(np);
    rng.split(dir).normals(0, u);
    double norm = 0.0;
    for (double v : u) norm += v * v;
    norm = std::sqrt(norm);
    double analytic = 0.0;
    for (std::size_t k = 0; k < np; ++k) {
      u[k] /= norm;
      analytic += lg.grad[k] * u[k];
    }
    const double h = 1e-5;
    std::vector<double> plus(net.params().begin(), net.params().end()), minus = plus;
    for (std::size_t k = 0; k < np; ++k) {
      plus[k] += h * u[k];
      minus[k] -= h * u[k];
    }
    const double fd = (mlp_loss_grad(MlpVelocity({3, 8, 2}, plus), b).loss -
                       mlp_loss_grad(MlpVelocity({3, 8, 2}, minus), b).loss) /
                      (2 * h);
    CHECK(std::abs(analytic - fd) <= 1e-5 * std::max(std::abs(fd), 1e-3));
  }
}

TEST_CASE("checkpoint round trip") {
  const MlpVelocity net = MlpVelocity::init(MlpVelocity::default_widths(), 21);
  const CheckpointMeta meta{1200, 0.0421875, "a2", 21};
  const std::string bytes = checkpoint_save(net, meta);
  const Checkpoint loaded = checkpoint_load(bytes);
  CHECK(checkpoint_save(loaded) == bytes);
  CHECK(loaded.step == 1200);
  CHECK(loaded.val_mse == 0.0421875);
  CHECK(loaded.schedule_id == "a2");
  CHECK(loaded.rng_seed == 21);
  CHECK(std::equal(loaded.params.begin(), loaded.params.end(), net.params().begin()));

  const MlpVelocity back = loaded.network();
  const RandomStream rng(8);
  for (std::uint64_t i = 0; i < 100; ++i) {
    const std::vector<double> x{-3.0 + 6.0 * rng.uniform(i, 0), -3.0 + 6.0 * rng.uniform(i, 1)};
    const double t = rng.uniform(i, 2);
    CHECK(mlp_forward(back, x, t) == mlp_forward(net, x, t));
  }
}

TEST_CASE("checkpoint format errors") {
  const std::string bytes =
      checkpoint_save(MlpVelocity::init({3, 4, 2}, 1), CheckpointMeta{1, 0.5, "a1", 1});
  CHECK_THROWS_AS(checkpoint_load(bytes.substr(0, bytes.size() / 2)), FormatError);
  CHECK_THROWS_AS(checkpoint_load(""), FormatError);
  std::string wrong_version = bytes;
  const auto pos = wrong_version.find("\"version\":1");
  REQUIRE(pos != std::string::npos);
  wrong_version.replace(pos, 11, "\"version\":2");
  CHECK_THROWS_AS(checkpoint_load(wrong_version), FormatError);
  std::string negative = bytes;
  const auto vpos = negative.find("\"val_mse\":0.5");
  REQUIRE(vpos != std::string::npos);
  negative.replace(vpos, 13, "\"val_mse\":-0.5");
  CHECK_THROWS_AS(checkpoint_load(negative), FormatError);
}
