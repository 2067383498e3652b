#include "flowkl/quadrature.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace flowkl {

namespace {
void check_length(std::size_t values, std::size_t points) {
  if (values != points) {
    throw std::invalid_argument("trapezoid: " + std::to_string(values) + " values for " +
                                std::to_string(points) + " grid points");
  }
}
}  // namespace

void CompensatedSum::add(double v) {
  const double s = sum_ + v;
  if (std::abs(sum_) >= std::abs(v)) {
    carry_ += (sum_ - s) + v;
  } else {
    carry_ += (v - s) + sum_;
  }
  sum_ = s;
}

double trapezoid(std::span<const double> values, std::span<const double> abscissa) {
  check_length(values.size(), abscissa.size());
  CompensatedSum acc;
  for (std::size_t k = 1; k < values.size(); ++k) {
    acc.add(0.5 * (abscissa[k] - abscissa[k - 1]) * (values[k] + values[k - 1]));
  }
  return acc.value();
}

double trapezoid(std::span<const double> values, const TimeGrid& grid) {
  check_length(values.size(), grid.count());
  const double h = grid.spacing();
  CompensatedSum acc;
  acc.add(0.5 * values.front());
  for (std::size_t k = 1; k + 1 < values.size(); ++k) acc.add(values[k]);
  acc.add(0.5 * values.back());
  return h * acc.value();
}

std::vector<double> cumulative_trapezoid(std::span<const double> values, const TimeGrid& grid) {
  check_length(values.size(), grid.count());
  std::vector<double> out(values.size(), 0.0);
  CompensatedSum acc;
  for (std::size_t k = 1; k < values.size(); ++k) {
    acc.add(0.5 * (grid[k] - grid[k - 1]) * (values[k] + values[k - 1]));
    out[k] = acc.value();
  }
  return out;
}

std::vector<double> trapezoid_weights(const TimeGrid& grid) {
  std::vector<double> w(grid.count(), grid.spacing());
  w.front() *= 0.5;
  w.back() *= 0.5;
  return w;
}

}  // namespace flowkl
