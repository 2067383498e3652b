#pragma once

#include <span>

#include <Eigen/Dense>

#include "flowkl/velocity_field.hpp"

namespace flowkl {

/// Value and first/second spatial derivative data of a field at one (x, t).
struct FieldJet {
  Eigen::VectorXd value;
  Eigen::MatrixXd jacobian;       ///< jacobian(i, j) = d v_i / d x_j
  double divergence = 0.0;
  Eigen::VectorXd grad_divergence;
};

/// d forward passes, one per basis direction.
Eigen::MatrixXd jacobian(const VelocityField& f, std::span<const double> x, double t);

/// Trace of the Jacobian, accumulated column by column.
double divergence(const VelocityField& f, std::span<const double> x, double t);

/// Value and divergence together from the same d forward passes.
double value_and_divergence(const VelocityField& f, std::span<const double> x, double t,
                            std::span<double> value);

/// Gradient of div f by second-order directional probes.
Eigen::VectorXd grad_divergence(const VelocityField& f, std::span<const double> x, double t);

/// Everything at once from d(d+1)/2 Dual2 probes: along e_i for the diagonal
/// second derivatives and along e_i + e_j for mixed ones (polarization).
FieldJet field_jet(const VelocityField& f, std::span<const double> x, double t);

/// Central difference step cbrt(eps) * (1 + |x|).
double fd_step(double x);

/// Central finite-difference Jacobian, used as an oracle.
Eigen::MatrixXd fd_jacobian(const VelocityField& f, std::span<const double> x, double t);

/// Central finite differences of the forward-mode divergence.
Eigen::VectorXd fd_grad_divergence(const VelocityField& f, std::span<const double> x, double t);

}  // namespace flowkl
