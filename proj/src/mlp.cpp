#include "flowkl/mlp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "flowkl/errors.hpp"
#include "flowkl/rng.hpp"

namespace flowkl {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Vectorizes through exp; within 4e-16 of std::tanh and saturates cleanly.
template <class Derived>
Eigen::ArrayXXd tanh_batch(const Eigen::ArrayBase<Derived>& h) {
  return 1.0 - 2.0 / ((2.0 * h).exp() + 1.0);
}

void check_widths(std::span<const std::size_t> widths) {
  if (widths.size() < 2) throw std::invalid_argument("MLP needs at least one layer");
  for (std::size_t w : widths) {
    if (w == 0) throw std::invalid_argument("MLP layer width must be positive");
  }
  if (widths.front() != widths.back() + 1) {
    throw std::invalid_argument("MLP input width must be output width + 1 (x and t), got " +
                                std::to_string(widths.front()) + " -> " +
                                std::to_string(widths.back()));
  }
}

// Eigen-owned (aligned) copies of the layers. Kernels on raw vector storage
// would round differently depending on where the allocator placed it.
struct Layers {
  std::vector<RowMatrix> w;
  std::vector<Eigen::VectorXd> b;
  std::vector<std::size_t> offsets;
};

Layers unpack(std::span<const std::size_t> widths, std::span<const double> params) {
  Layers out;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(widths[l]);
    const auto fan_out = static_cast<Eigen::Index>(widths[l + 1]);
    out.offsets.push_back(offset);
    out.w.emplace_back(Eigen::Map<const RowMatrix>(params.data() + offset, fan_out, fan_in));
    out.b.emplace_back(
        Eigen::Map<const Eigen::VectorXd>(params.data() + offset + fan_out * fan_in, fan_out));
    offset += static_cast<std::size_t>((fan_in + 1) * fan_out);
  }
  return out;
}

}  // namespace

std::size_t MlpVelocity::param_count(std::span<const std::size_t> widths) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += (widths[l] + 1) * widths[l + 1];
  return n;
}

MlpVelocity::MlpVelocity(std::vector<std::size_t> widths, std::vector<double> params)
    : widths_(std::move(widths)), params_(std::move(params)) {
  check_widths(widths_);
  if (params_.size() != param_count(widths_)) {
    throw std::invalid_argument("MLP expects " + std::to_string(param_count(widths_)) +
                                " parameters, got " + std::to_string(params_.size()));
  }
  for (double v : params_) {
    if (!std::isfinite(v)) throw NumericError("MLP parameters contain a non-finite value");
  }
}

MlpVelocity MlpVelocity::zeros(std::vector<std::size_t> widths) {
  check_widths(widths);
  std::vector<double> params(param_count(widths), 0.0);
  return MlpVelocity(std::move(widths), std::move(params));
}

MlpVelocity MlpVelocity::init(std::vector<std::size_t> widths, std::uint64_t seed) {
  check_widths(widths);
  std::vector<double> params(param_count(widths), 0.0);
  const RandomStream stream = RandomStream(seed).split("mlp_init");
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l];
    const std::size_t fan_out = widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t k = 0; k < fan_in * fan_out; ++k) {
      params[offset + k] = bound * (2.0 * stream.uniform(offset + k) - 1.0);
    }
    offset += (fan_in + 1) * fan_out;
  }
  return MlpVelocity(std::move(widths), std::move(params));
}

Eigen::MatrixXd MlpVelocity::forward_batch(const Eigen::MatrixXd& x,
                                           std::span<const double> t) const {
  const Eigen::Index n = x.cols();
  const auto d = static_cast<Eigen::Index>(dim());
  Eigen::MatrixXd z(d + 1, n);
  z.topRows(d) = x;
  z.row(d) = Eigen::Map<const Eigen::RowVectorXd>(t.data(), n);
  const Layers net = unpack(widths_, params_);
  const std::size_t layers = net.w.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd h = net.w[l] * z;
    h.colwise() += net.b[l];
    z = (l + 1 < layers) ? Eigen::MatrixXd(tanh_batch(h.array()).matrix()) : h;
  }
  return z;
}

void MlpVelocity::batch_jet(const Eigen::MatrixXd& x, double t, int order,
                            BatchJet& out) const {
  const Eigen::Index n = x.cols();
  const auto d = static_cast<Eigen::Index>(dim());
  // Column blocks of width n: value, d first derivatives, and for order 2 the
  // second derivatives for each pair i <= k.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  if (order >= 2) {
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index k = i; k < d; ++k) pairs.emplace_back(i, k);
    }
  }
  const auto npairs = static_cast<Eigen::Index>(pairs.size());
  const Eigen::Index blocks = 1 + d + npairs;
  auto block = [n](Eigen::MatrixXd& m, Eigen::Index b) { return m.middleCols(b * n, n); };

  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(d + 1, blocks * n);
  block(z, 0).topRows(d) = x;
  block(z, 0).row(d).setConstant(t);
  for (Eigen::Index i = 0; i < d; ++i) block(z, 1 + i).row(i).setOnes();

  const Layers net = unpack(widths_, params_);
  const std::size_t layers = net.w.size();
  Eigen::MatrixXd h;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto fan_out = static_cast<Eigen::Index>(widths_[l + 1]);
    h.noalias() = net.w[l] * z;
    block(h, 0).colwise() += net.b[l];
    if (l + 1 == layers) break;

    const Eigen::ArrayXXd act = tanh_batch(block(h, 0).array());
    const Eigen::ArrayXXd slope = 1.0 - act.square();
    z.resize(fan_out, blocks * n);
    for (Eigen::Index q = 0; q < npairs; ++q) {
      const auto [i, k] = pairs[static_cast<std::size_t>(q)];
      block(z, 1 + d + q) = (-2.0 * act * slope * block(h, 1 + i).array() *
                                 block(h, 1 + k).array() +
                             slope * block(h, 1 + d + q).array())
                                .matrix();
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      block(z, 1 + i) = (slope * block(h, 1 + i).array()).matrix();
    }
    block(z, 0) = act.matrix();
  }

  out.value = block(h, 0);
  out.divergence = Eigen::RowVectorXd::Zero(n);
  for (Eigen::Index i = 0; i < d; ++i) out.divergence += block(h, 1 + i).row(i);
  if (order < 2) return;
  out.jacobian.resize(d * d, n);
  for (Eigen::Index j = 0; j < d; ++j) {
    out.jacobian.middleRows(j * d, d) = block(h, 1 + j);
  }
  out.grad_divergence = Eigen::MatrixXd::Zero(d, n);
  for (Eigen::Index q = 0; q < npairs; ++q) {
    const auto [i, k] = pairs[static_cast<std::size_t>(q)];
    // d^2 v_i / dx_i dx_k feeds grad div along k, and along i when i != k.
    out.grad_divergence.row(k) += block(h, 1 + d + q).row(i);
    if (i != k) out.grad_divergence.row(i) += block(h, 1 + d + q).row(k);
  }
}

Eigen::VectorXd mlp_forward(const MlpVelocity& m, std::span<const double> x, double t) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(m.dim()));
  m.evaluate(x, t, std::span<double>(out.data(), m.dim()));
  return out;
}

LossGrad mlp_loss_grad(const MlpVelocity& m, const Batch& batch) {
  const Eigen::Index n = batch.x.cols();
  if (n == 0) throw std::invalid_argument("mlp_loss_grad: empty batch");
  const auto& widths = m.widths();
  const auto d = static_cast<Eigen::Index>(m.dim());
  const std::size_t layers = widths.size() - 1;

  // Forward, keeping every layer's activations.
  std::vector<Eigen::MatrixXd> act(layers + 1);
  act[0].resize(d + 1, n);
  act[0].topRows(d) = batch.x;
  act[0].row(d) = Eigen::Map<const Eigen::RowVectorXd>(batch.t.data(), n);
  const Layers net = unpack(widths, m.params());
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd h = net.w[l] * act[l];
    h.colwise() += net.b[l];
    act[l + 1] = (l + 1 < layers) ? Eigen::MatrixXd(tanh_batch(h.array()).matrix()) : h;
  }

  const Eigen::MatrixXd residual = act[layers] - batch.target;
  LossGrad result;
  result.loss = residual.squaredNorm() / static_cast<double>(n);
  if (!std::isfinite(result.loss)) throw NumericError("mlp_loss_grad: loss is not finite");
  result.grad.assign(m.param_count(), 0.0);

  Eigen::MatrixXd delta = (2.0 / static_cast<double>(n)) * residual;
  for (std::size_t l = layers; l-- > 0;) {
    const auto fan_in = static_cast<Eigen::Index>(widths[l]);
    const auto fan_out = static_cast<Eigen::Index>(widths[l + 1]);
    const RowMatrix gw = delta * act[l].transpose();
    const Eigen::VectorXd gb = delta.rowwise().sum();
    Eigen::Map<RowMatrix>(result.grad.data() + net.offsets[l], fan_out, fan_in) = gw;
    Eigen::Map<Eigen::VectorXd>(result.grad.data() + net.offsets[l] + fan_out * fan_in, fan_out) = gb;
    if (l == 0) break;
    const Eigen::MatrixXd back = net.w[l].transpose() * delta;
    delta = back.array() * (1.0 - act[l].array().square());
  }
  return result;
}

}  // namespace flowkl
