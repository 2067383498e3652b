#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "flowkl/dual.hpp"
#include "flowkl/velocity_field.hpp"

namespace flowkl {

/// Dense tanh network v(x, t) with input (x, t) and a linear output layer.
///
/// Parameters live in one flat vector, layer by layer: the fan_out x fan_in
/// weight matrix in row-major order followed by the fan_out biases.
class MlpVelocity final : public FieldAdapter<MlpVelocity> {
 public:
  static std::vector<std::size_t> default_widths(std::size_t dim = 2) {
    return {dim + 1, 64, 64, 64, dim};
  }

  /// Uniform weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases.
  static MlpVelocity init(std::vector<std::size_t> widths, std::uint64_t seed);
  /// All parameters zero; the network outputs 0 everywhere.
  static MlpVelocity zeros(std::vector<std::size_t> widths);

  MlpVelocity(std::vector<std::size_t> widths, std::vector<double> params);

  static std::size_t param_count(std::span<const std::size_t> widths);

  std::size_t dim() const override { return widths_.back(); }
  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t param_count() const noexcept { return params_.size(); }
  std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }

  template <class T>
  void apply(std::span<const T> x, double t, std::span<T> out) const;

  void evaluate_batch(const Eigen::MatrixXd& x, double t, Eigen::MatrixXd& out) const override {
    const std::vector<double> times(static_cast<std::size_t>(x.cols()), t);
    out = forward_batch(x, times);
  }

  /// Propagates value, first and second x-derivative columns through every
  /// layer together, so each layer is a single matrix product.
  void batch_jet(const Eigen::MatrixXd& x, double t, int order, BatchJet& out) const override;

  /// Plain forward for n samples: `x` is d x n (one column per sample).
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x, std::span<const double> t) const;

 private:
  std::vector<std::size_t> widths_;
  std::vector<double> params_;
};

/// v(x, t) for one point.
Eigen::VectorXd mlp_forward(const MlpVelocity& m, std::span<const double> x, double t);

/// Regression batch; column i of `x` and `target` belongs to time t[i].
struct Batch {
  Eigen::MatrixXd x;
  std::vector<double> t;
  Eigen::MatrixXd target;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean over the batch of |v(x_i, t_i) - target_i|^2 and its exact gradient
/// in the parameters by reverse-mode accumulation.
LossGrad mlp_loss_grad(const MlpVelocity& m, const Batch& batch);

// ---- template definition ----------------------------------------------------

template <class T>
void MlpVelocity::apply(std::span<const T> x, double t, std::span<T> out) const {
  const std::size_t layers = widths_.size() - 1;
  std::size_t widest = 0;
  for (std::size_t w : widths_) widest = w > widest ? w : widest;
  std::vector<T> cur(widest), next(widest);
  for (std::size_t i = 0; i < x.size(); ++i) cur[i] = x[i];
  cur[x.size()] = T(t);

  const double* p = params_.data();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t fan_in = widths_[l];
    const std::size_t fan_out = widths_[l + 1];
    const double* w = p;
    const double* b = p + fan_in * fan_out;
    for (std::size_t o = 0; o < fan_out; ++o) {
      const double* row = w + o * fan_in;
      T acc = T(b[o]);
      for (std::size_t i = 0; i < fan_in; ++i) acc += row[i] * cur[i];
      next[o] = acc;
    }
    if (l + 1 < layers) {
      using std::tanh;
      for (std::size_t o = 0; o < fan_out; ++o) next[o] = tanh(next[o]);
    }
    std::swap(cur, next);
    p = b + fan_out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cur[i];
}

}  // namespace flowkl
