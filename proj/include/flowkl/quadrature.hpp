#pragma once

#include <span>
#include <vector>

#include "flowkl/time_grid.hpp"

namespace flowkl {

/// Trapezoidal rule over the whole grid.
double trapezoid(std::span<const double> values, const TimeGrid& grid);

/// Running trapezoid: entry k integrates over [0, t_k]; entry 0 is 0.
std::vector<double> cumulative_trapezoid(std::span<const double> values, const TimeGrid& grid);

/// Trapezoid with weights for a non-uniform abscissa.
double trapezoid(std::span<const double> values, std::span<const double> abscissa);

/// Quadrature weights w_k with trapezoid = sum_k w_k f_k.
std::vector<double> trapezoid_weights(const TimeGrid& grid);

/// Neumaier-compensated running sum; reduction order is the insertion order.
class CompensatedSum {
 public:
  void add(double v);
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

}  // namespace flowkl
