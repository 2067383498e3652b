#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

namespace flowkl {

/// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a hash of a purpose label, used to name sub-streams.
constexpr std::uint64_t stream_tag(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Counter-based random stream.
///
/// Every draw is a pure function of (key, sample index, lane), so any sample
/// can be regenerated independently of how work is sharded. Child streams
/// are derived with `split`, which mixes a tag into the key.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : RandomStream(seed, 0) {}
  RandomStream(std::uint64_t seed, std::uint64_t stream);

  RandomStream split(std::uint64_t tag) const;
  RandomStream split(std::string_view label) const { return split(stream_tag(label)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t index, std::uint32_t lane = 0) const;

  /// Fills `out` with independent standard normals belonging to sample `index`.
  void normals(std::uint64_t index, std::span<double> out) const;

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::array<std::uint64_t, 2> block(std::uint64_t index, std::uint32_t lane) const;

  std::uint64_t key_;
};

}  // namespace flowkl
