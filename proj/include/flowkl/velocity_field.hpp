#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "flowkl/dual.hpp"
#include "flowkl/jet_kernel.hpp"
#include "flowkl/schedule.hpp"

namespace flowkl {

/// Field data for a batch of points sharing one time, one column per point.
struct BatchJet {
  Eigen::MatrixXd value;            ///< d x n
  Eigen::RowVectorXd divergence;    ///< 1 x n
  Eigen::MatrixXd jacobian;         ///< d*d x n, row i + d*j holds d v_i / d x_j (order 2 only)
  Eigen::MatrixXd grad_divergence;  ///< d x n (order 2 only)
};

/// A time-dependent vector field v(x, t) on R^d.
///
/// Evaluation is available for plain, Dual and Dual2 coordinates so forward
/// mode can probe derivatives in x. Time is always a plain scalar.
/// Implementations must be immutable while queried.
class VelocityField {
 public:
  virtual ~VelocityField() = default;

  virtual std::size_t dim() const = 0;

  virtual void evaluate(std::span<const double> x, double t, std::span<double> out) const = 0;
  virtual void evaluate(std::span<const Dual> x, double t, std::span<Dual> out) const = 0;
  virtual void evaluate(std::span<const Dual2> x, double t, std::span<Dual2> out) const = 0;

  /// Plain values for the columns of `x`, all at time t.
  virtual void evaluate_batch(const Eigen::MatrixXd& x, double t, Eigen::MatrixXd& out) const;

  /// order 1: value and divergence; order 2: also the Jacobian and grad div.
  /// The default evaluates point by point with forward-mode probes.
  virtual void batch_jet(const Eigen::MatrixXd& x, double t, int order, BatchJet& out) const;

  std::vector<double> operator()(std::span<const double> x, double t) const {
    std::vector<double> out(dim());
    evaluate(x, t, out);
    return out;
  }
};

/// Implements the three scalar overloads from one `apply<T>` template.
template <class Derived>
class FieldAdapter : public VelocityField {
 public:
  void evaluate(std::span<const double> x, double t, std::span<double> out) const override {
    self().apply(x, t, out);
  }
  void evaluate(std::span<const Dual> x, double t, std::span<Dual> out) const override {
    self().apply(x, t, out);
  }
  void evaluate(std::span<const Dual2> x, double t, std::span<Dual2> out) const override {
    self().apply(x, t, out);
  }
  void batch_jet(const Eigen::MatrixXd& x, double t, int order, BatchJet& out) const override {
    const auto eval = [&](const std::vector<Dual2>& in, std::vector<Dual2>& o) {
      self().template apply<Dual2>(std::span<const Dual2>(in), t, std::span<Dual2>(o));
    };
    detail::batch_jet_columns(eval, x, order, out);
  }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

/// v(x, t) = 0.
class ZeroField final : public FieldAdapter<ZeroField> {
 public:
  explicit ZeroField(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }

  template <class T>
  void apply(std::span<const T> /*x*/, double /*t*/, std::span<T> out) const {
    for (auto& o : out) o = T(0.0);
  }

 private:
  std::size_t dim_;
};

/// v(x, t) = a(t) x for a schedule a.
class LinearField final : public FieldAdapter<LinearField> {
 public:
  LinearField(Schedule schedule, std::size_t dim) : schedule_(std::move(schedule)), dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  const Schedule& schedule() const noexcept { return schedule_; }

  template <class T>
  void apply(std::span<const T> x, double t, std::span<T> out) const {
    const double a = schedule_.rate(t);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i];
  }

 private:
  Schedule schedule_;
  std::size_t dim_;
};

/// v(x, t) = c(t) b: constant in x, hence divergence-free.
class TranslationField final : public FieldAdapter<TranslationField> {
 public:
  TranslationField(std::function<double(double)> coefficient, std::vector<double> direction)
      : coefficient_(std::move(coefficient)), direction_(std::move(direction)) {}
  std::size_t dim() const override { return direction_.size(); }

  template <class T>
  void apply(std::span<const T> /*x*/, double t, std::span<T> out) const {
    const double c = coefficient_(t);
    for (std::size_t i = 0; i < direction_.size(); ++i) out[i] = T(c * direction_[i]);
  }

 private:
  std::function<double(double)> coefficient_;
  std::vector<double> direction_;
};

}  // namespace flowkl
