#include "flowkl/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flowkl/errors.hpp"

namespace flowkl {

namespace {
constexpr const char* kFormatTag = "flowkl-checkpoint";
}

Checkpoint make_checkpoint(const MlpVelocity& m, const CheckpointMeta& meta) {
  Checkpoint c;
  c.widths = m.widths();
  c.params.assign(m.params().begin(), m.params().end());
  c.step = meta.step;
  c.val_mse = meta.val_mse;
  c.schedule_id = meta.schedule_id;
  c.rng_seed = meta.rng_seed;
  return c;
}

std::string checkpoint_save(const Checkpoint& ckpt) {
  nlohmann::json j;
  j["format"] = kFormatTag;
  j["version"] = kCheckpointVersion;
  j["activation"] = "tanh";
  j["widths"] = ckpt.widths;
  j["step"] = ckpt.step;
  j["val_mse"] = ckpt.val_mse;
  j["schedule_id"] = ckpt.schedule_id;
  j["rng_seed"] = ckpt.rng_seed;
  j["params"] = ckpt.params;
  return j.dump() + "\n";
}

std::string checkpoint_save(const MlpVelocity& m, const CheckpointMeta& meta) {
  return checkpoint_save(make_checkpoint(m, meta));
}

Checkpoint checkpoint_load(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", "") != kFormatTag) {
      throw FormatError("not a flowkl checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    if (j.at("activation").get<std::string>() != "tanh") {
      throw FormatError("unsupported activation");
    }
    Checkpoint c;
    c.widths = j.at("widths").get<std::vector<std::size_t>>();
    c.params = j.at("params").get<std::vector<double>>();
    c.step = j.at("step").get<std::size_t>();
    c.val_mse = j.at("val_mse").get<double>();
    c.schedule_id = j.at("schedule_id").get<std::string>();
    c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    if (!(c.val_mse >= 0.0)) throw FormatError("val_mse must be nonnegative");
    if (c.widths.size() < 2 || c.params.size() != MlpVelocity::param_count(c.widths)) {
      throw FormatError("parameter count does not match the layer widths");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint field error: ") + e.what());
  }
}

Checkpoint read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_load(buf.str());
}

}  // namespace flowkl
