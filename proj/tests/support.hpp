#pragma once

// Test-only fields and oracles shared by unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "flowkl/dual.hpp"
#include "flowkl/velocity_field.hpp"

namespace flowkl::testing {

/// f(x) = (x1^2, x1 x2), time-independent.
class QuadraticField final : public FieldAdapter<QuadraticField> {
 public:
  std::size_t dim() const override { return 2; }
  template <class T>
  void apply(std::span<const T> x, double, std::span<T> out) const {
    out[0] = x[0] * x[0];
    out[1] = x[0] * x[1];
  }
};

/// Uses every supported elementary function.
class MixedField final : public FieldAdapter<MixedField> {
 public:
  std::size_t dim() const override { return 2; }
  template <class T>
  void apply(std::span<const T> x, double t, std::span<T> out) const {
    using std::cos, std::exp, std::sin, std::sqrt, std::tanh;
    out[0] = sin(x[0]) * exp(0.3 * x[1]) + sqrt(1.0 + x[0] * x[0]) * t;
    out[1] = tanh(x[0] * x[1]) + cos(x[1]) / (2.0 + x[0] * x[0]) - 0.5 * x[1];
  }
};

/// a(t) x plus a rigid rotation at rate omega. Rotations are divergence-free
/// and preserve isotropic Gaussians, so q_t = p_t: u - v is tangential and
/// nonzero while s_p - s_q vanishes.
class RotatedField final : public FieldAdapter<RotatedField> {
 public:
  RotatedField(Schedule s, double omega) : s_(std::move(s)), omega_(omega) {}
  std::size_t dim() const override { return 2; }
  template <class T>
  void apply(std::span<const T> x, double t, std::span<T> out) const {
    const double a = s_.rate(t);
    out[0] = a * x[0] - omega_ * x[1];
    out[1] = a * x[1] + omega_ * x[0];
  }

 private:
  Schedule s_;
  double omega_;
};

/// Normwise relative error |a - b| / max(1, |b|).
inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

}  // namespace flowkl::testing
