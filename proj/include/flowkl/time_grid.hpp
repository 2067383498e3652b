#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace flowkl {

/// Uniform partition of [0, 1]; first point 0, last point 1.
class TimeGrid {
 public:
  static constexpr std::size_t kDefaultCount = 201;

  explicit TimeGrid(std::size_t count = kDefaultCount);

  std::size_t count() const noexcept { return points_.size(); }
  double spacing() const noexcept { return 1.0 / static_cast<double>(points_.size() - 1); }
  double operator[](std::size_t k) const { return points_[k]; }
  std::span<const double> points() const noexcept { return points_; }

 private:
  std::vector<double> points_;
};

}  // namespace flowkl
