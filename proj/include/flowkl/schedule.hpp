#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace flowkl {

enum class ScheduleId { A1, A2, A3, Custom };

/// Scalar rate a(t) on [0, 1] together with its antiderivative A(t), A(0) = 0.
///
/// The linear field u(x, t) = a(t) x transports N(0, I) along the isotropic
/// Gaussian path N(0, sigma(t)^2 I) with sigma(t) = exp(A(t)).
class Schedule {
 public:
  using Fn = std::function<double(double)>;

  /// a1(t) = sin(pi t)
  static Schedule a1();
  /// a2(t) = 0.3 sin(2 pi t) + 0.2
  static Schedule a2();
  /// a3(t) = t - 1/2
  static Schedule a3();
  /// a(t) = 0; the path stays at N(0, I).
  static Schedule zero();

  /// Looks up "a1", "a2", "a3" or "zero".
  static Schedule from_id(std::string_view id);

  /// Rate only; the antiderivative is computed by adaptive Simpson quadrature.
  static Schedule custom(std::string name, Fn rate);
  /// Rate with a known antiderivative.
  static Schedule custom(std::string name, Fn rate, Fn rate_integral);

  /// Piecewise-linear interpolation of (t, a) pairs covering [0, 1].
  static Schedule tabulated(std::string name, std::vector<std::pair<double, double>> table);
  /// Reads `t,a` rows (optional header) from a CSV file.
  static Schedule from_csv(const std::string& path);

  /// The schedule a(t) + beta; its path has scale sigma(t) e^(beta t).
  Schedule shifted(double beta) const;

  ScheduleId id() const noexcept { return id_; }
  const std::string& name() const noexcept { return name_; }

  /// a(t); throws std::domain_error outside [0, 1].
  double rate(double t) const;
  /// A(t) = integral of a over [0, t].
  double rate_integral(double t) const;
  /// exp(A(t)).
  double sigma(double t) const;

 private:
  Schedule(ScheduleId id, std::string name, Fn rate, Fn integral)
      : id_(id), name_(std::move(name)), rate_(std::move(rate)), integral_(std::move(integral)) {}

  ScheduleId id_;
  std::string name_;
  Fn rate_;
  Fn integral_;
};

/// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance `tol`.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-10);

}  // namespace flowkl
