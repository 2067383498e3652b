#include "flowkl/rng.hpp"

#include <cmath>
#include <numbers>

namespace flowkl {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c,
                                        std::array<std::uint32_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix64(splitmix64(seed) ^ stream)) {}

RandomStream RandomStream::split(std::uint64_t tag) const {
  RandomStream child(*this);
  child.key_ = splitmix64(key_ ^ splitmix64(tag + 0x632be59bd9b4e019ull));
  return child;
}

std::array<std::uint64_t, 2> RandomStream::block(std::uint64_t index, std::uint32_t lane) const {
  const auto out = philox4x32(
      {static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), lane, 0u},
      {static_cast<std::uint32_t>(key_), static_cast<std::uint32_t>(key_ >> 32)});
  return {(static_cast<std::uint64_t>(out[0]) << 32) | out[1],
          (static_cast<std::uint64_t>(out[2]) << 32) | out[3]};
}

double RandomStream::uniform(std::uint64_t index, std::uint32_t lane) const {
  return static_cast<double>(block(index, lane)[0] >> 11) * kTwoPow53Inv;
}

void RandomStream::normals(std::uint64_t index, std::span<double> out) const {
  // Box-Muller on pairs; one Philox block feeds one pair.
  for (std::size_t j = 0; j < out.size(); j += 2) {
    const auto bits = block(index, static_cast<std::uint32_t>(j / 2));
    const double u1 = (static_cast<double>(bits[0] >> 11) + 1.0) * kTwoPow53Inv;  // (0, 1]
    const double u2 = static_cast<double>(bits[1] >> 11) * kTwoPow53Inv;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    out[j] = r * std::cos(phi);
    if (j + 1 < out.size()) out[j + 1] = r * std::sin(phi);
  }
}

}  // namespace flowkl
