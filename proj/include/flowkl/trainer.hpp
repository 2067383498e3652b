#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "flowkl/checkpoint.hpp"
#include "flowkl/mlp.hpp"
#include "flowkl/schedule.hpp"
#include "flowkl/time_grid.hpp"
#include "flowkl/velocity_field.hpp"

namespace flowkl {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg = {}) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr);

  std::size_t steps_taken() const noexcept { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

/// Linear warmup to the peak, then cosine decay to peak * final_fraction.
struct CosineSchedule {
  double peak = 1e-3;
  std::size_t warmup_steps = 500;
  double final_fraction = 0.01;
  std::size_t total_steps = 20000;

  double at(std::size_t step) const;
};

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t max_steps = 20000;
  CosineSchedule lr{};
  AdamConfig adam{};
  std::uint64_t seed = 0;
  std::size_t val_n = 2048;      ///< held-out samples per validation time
  std::size_t val_times = 21;    ///< uniform validation grid size
  std::size_t val_every = 100;
  std::vector<double> ladder{0.5, 0.2, 0.1, 0.05, 0.02, 0.01};
  bool stop_when_ladder_complete = true;

  /// Throws std::invalid_argument if the ladder is not strictly decreasing and positive.
  void validate() const;
};

struct TrainLogRow {
  std::size_t step = 0;
  double train_loss = 0.0;
  double val_mse = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<Checkpoint> ladder;  ///< one per validation at which new thresholds were crossed
  Checkpoint final;
  std::vector<TrainLogRow> log;
};

/// Regresses v(x, t) onto a(t) x with t ~ U[0, 1] and x ~ p_t.
TrainResult train_direct_fm(const Schedule& s, MlpVelocity net, const TrainConfig& cfg);

/// mu_t x1 + sigma_t x0 path with mu_0 = sigma_1 = 0 and mu_1 = sigma_0 = 1.
struct AffineSchedule {
  std::function<double(double)> mu;
  std::function<double(double)> sigma;
  std::function<double(double)> dmu;
  std::function<double(double)> dsigma;

  /// mu_t = t, sigma_t = 1 - t.
  static AffineSchedule linear();
  /// mu_t = sin(pi t / 2), sigma_t = cos(pi t / 2).
  static AffineSchedule trigonometric();
};

struct ClipWindow {
  double t0 = 0.001;
  double T = 0.999;

  void validate() const;
};

struct CfmSample {
  Eigen::VectorXd x_t;
  Eigen::VectorXd target;
};

/// x_t = mu_t x1 + sigma_t x0 and its conditional velocity mu'_t x1 + sigma'_t x0.
CfmSample cfm_target(const AffineSchedule& as, std::span<const double> x1,
                     std::span<const double> x0, double t);

/// Conditional flow matching on a point cloud (rows of `data`).
/// Validation uses a fixed held-out set of conditional targets.
TrainResult train_affine_cfm(const Eigen::MatrixXd& data, const AffineSchedule& as,
                             const ClipWindow& clip, MlpVelocity net, const TrainConfig& cfg);

/// Mean over grid times of E_{x ~ p_t} |v(x, t) - a(t) x|^2, with the same
/// standard normals reused at every time.
double validation_mse(const VelocityField& field, const Schedule& s, const TimeGrid& grid,
                      std::size_t n, std::uint64_t seed);
double validation_mse(const Checkpoint& ckpt, const Schedule& s, const TimeGrid& grid,
                      std::size_t n, std::uint64_t seed);

/// Architecture and optimizer settings needed to attribute a run.
struct RunInfo {
  std::string mode;         ///< "direct" or "affine"
  std::string schedule_id;
  std::vector<std::size_t> widths;
  TrainConfig config;
};

/// manifest.json, ckpt_<step>.json and train_log.csv under `dir`.
void write_run_directory(const std::string& dir, const RunInfo& info, const TrainResult& result);

/// Ladder checkpoints listed in a run manifest, in ladder order.
std::vector<Checkpoint> load_run_ladder(const std::string& dir);

}  // namespace flowkl
