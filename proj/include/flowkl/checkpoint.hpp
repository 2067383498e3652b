#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "flowkl/mlp.hpp"

namespace flowkl {

inline constexpr int kCheckpointVersion = 1;

/// Parameter snapshot of a training run, tagged with its validation error.
struct Checkpoint {
  std::vector<std::size_t> widths;
  std::vector<double> params;
  std::size_t step = 0;
  double val_mse = 0.0;
  std::string schedule_id;
  std::uint64_t rng_seed = 0;

  MlpVelocity network() const { return MlpVelocity(widths, params); }
};

struct CheckpointMeta {
  std::size_t step = 0;
  double val_mse = 0.0;
  std::string schedule_id;
  std::uint64_t rng_seed = 0;
};

Checkpoint make_checkpoint(const MlpVelocity& m, const CheckpointMeta& meta);

/// Versioned JSON text; doubles use shortest round-trip decimal form.
std::string checkpoint_save(const Checkpoint& ckpt);
std::string checkpoint_save(const MlpVelocity& m, const CheckpointMeta& meta);

/// Throws FormatError on malformed, truncated or version-mismatched input.
Checkpoint checkpoint_load(const std::string& bytes);

Checkpoint read_checkpoint_file(const std::string& path);

}  // namespace flowkl
