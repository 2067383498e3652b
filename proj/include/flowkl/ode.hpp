#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include <Eigen/Dense>

#include "flowkl/velocity_field.hpp"

namespace flowkl {

enum class Direction { Forward, Backward };

/// Fixed-step classical RK4.
///
/// `steps` is the step count for a solve spanning all of [0, 1]; shorter
/// spans use ceil(steps * span) steps so the step size stays uniform across
/// queries at different times.
struct IvpConfig {
  std::size_t steps = 200;
  Direction direction = Direction::Forward;
};

std::size_t step_count(const IvpConfig& cfg, double t_from, double t_to);

/// Density at the start of a backward solve. Defaults to N(0, I) at t = 0.
struct BaseDensity {
  double time = 0.0;
  std::function<double(std::span<const double>)> log_density;
  std::function<Eigen::VectorXd(std::span<const double>)> score;

  static BaseDensity standard_normal();
};

struct LogDensityResult {
  double log_q = 0.0;
  Eigen::VectorXd x0;  ///< trajectory endpoint at the base time
  double ell = 0.0;    ///< log-volume change, -int div v ds along the trajectory
};

struct ScoreResult {
  double log_q = 0.0;
  Eigen::VectorXd score;        ///< grad_x log q_t(x)
  Eigen::VectorXd x0;
  Eigen::MatrixXd sensitivity;  ///< d x0 / d x
};

/// Integrates dx/ds = f(x, s) from t_from to t_to.
Eigen::VectorXd rk4_solve(const VelocityField& f, std::span<const double> x, double t_from,
                          double t_to, const IvpConfig& cfg);

/// log q_t(x) by a backward solve to the base time with divergence accumulation.
LogDensityResult backward_logdensity(const VelocityField& f, std::span<const double> x, double t,
                                     const IvpConfig& cfg,
                                     const BaseDensity& base = BaseDensity::standard_normal());

/// log q_t(x) and its x-gradient from the backward solve augmented with the
/// trajectory sensitivity J = dx_s/dx and the gradient of the divergence integral.
ScoreResult backward_score(const VelocityField& f, std::span<const double> x, double t,
                           const IvpConfig& cfg,
                           const BaseDensity& base = BaseDensity::standard_normal());

struct BatchResult {
  Eigen::VectorXd log_q;
  Eigen::MatrixXd x0;
  Eigen::MatrixXd score;  ///< left empty unless requested
};

/// backward_logdensity (and backward_score when `with_score`) for the columns
/// of `x`, all at time t, integrated together through VelocityField::batch_jet.
BatchResult backward_batch(const VelocityField& f, const Eigen::MatrixXd& x, double t,
                           const IvpConfig& cfg, bool with_score,
                           const BaseDensity& base = BaseDensity::standard_normal());

/// Score by transporting s along characteristics, Ds/Ds = -(grad v)^T s - grad(div v),
/// forward from the base time after a plain backward solve for x0.
Eigen::VectorXd score_transport_oracle(const VelocityField& f, std::span<const double> x,
                                       double t, const IvpConfig& cfg,
                                       const BaseDensity& base = BaseDensity::standard_normal());

}  // namespace flowkl
