#include <doctest.h>

#include <cmath>
#include <vector>

#include "flowkl/rng.hpp"

using namespace flowkl;

TEST_CASE("philox4x32-10 known-answer vectors") {
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) ==
        std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                   {0xffffffffu, 0xffffffffu}) ==
        std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                   {0xa4093822u, 0x299f31d0u}) ==
        std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("draws are pure functions of key and index") {
  const RandomStream a(42), b(42);
  std::vector<double> za(3), zb(3);
  a.normals(17, za);
  b.normals(17, zb);
  CHECK(za == zb);
  CHECK(a.uniform(5) == b.uniform(5));
  CHECK(a.split("x").uniform(5) != a.split("y").uniform(5));
  CHECK(a.split("x").uniform(5) == b.split("x").uniform(5));
  CHECK(RandomStream(1).uniform(0) != RandomStream(2).uniform(0));
}

TEST_CASE("normal draws have unit moments") {
  const RandomStream s = RandomStream(7).split("moments");
  const std::size_t n = 200000;
  double sum = 0.0, sq = 0.0;
  std::vector<double> z(2);
  for (std::size_t i = 0; i < n; ++i) {
    s.normals(i, z);
    for (double v : z) {
      sum += v;
      sq += v * v;
    }
  }
  const double m = sum / (2.0 * n);
  const double var = sq / (2.0 * n) - m * m;
  CHECK(std::abs(m) < 5.0 / std::sqrt(2.0 * n));
  CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / (2.0 * n)));
}

TEST_CASE("uniforms stay in [0, 1)") {
  const RandomStream s(3);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double u = s.uniform(i);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}
