#include "flowkl/time_grid.hpp"

#include <stdexcept>

namespace flowkl {

TimeGrid::TimeGrid(std::size_t count) {
  if (count < 2) throw std::invalid_argument("TimeGrid: need at least 2 points");
  points_.resize(count);
  const double n = static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) points_[k] = static_cast<double>(k) / n;
}

}  // namespace flowkl
