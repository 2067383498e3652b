#include "flowkl/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "flowkl/errors.hpp"
#include "flowkl/io.hpp"
#include "flowkl/rng.hpp"

namespace flowkl {

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
  }
}

double CosineSchedule::at(std::size_t step) const {
  if (step < warmup_steps) {
    return peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const double floor = peak * final_fraction;
  const std::size_t span = total_steps > warmup_steps ? total_steps - warmup_steps : 1;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(span));
  return floor + (peak - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void TrainConfig::validate() const {
  if (batch_size == 0 || max_steps == 0 || val_n == 0 || val_every == 0 || val_times < 2) {
    throw std::invalid_argument("TrainConfig: counts must be positive");
  }
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (!(ladder[i] > 0.0)) throw std::invalid_argument("TrainConfig: ladder must be positive");
    if (i > 0 && !(ladder[i] < ladder[i - 1])) {
      throw std::invalid_argument("TrainConfig: ladder must be strictly decreasing");
    }
  }
}

void ClipWindow::validate() const {
  if (!(0.0 <= t0 && t0 < T && T <= 1.0)) {
    throw std::invalid_argument("ClipWindow: need 0 <= t0 < T <= 1");
  }
}

AffineSchedule AffineSchedule::linear() {
  return {[](double t) { return t; }, [](double t) { return 1.0 - t; },
          [](double) { return 1.0; }, [](double) { return -1.0; }};
}

AffineSchedule AffineSchedule::trigonometric() {
  constexpr double h = 0.5 * std::numbers::pi;
  // sigma as sin(h (1 - t)) so both endpoints are exact in floating point.
  return {[](double t) { return std::sin(h * t); }, [](double t) { return std::sin(h * (1.0 - t)); },
          [](double t) { return h * std::cos(h * t); },
          [](double t) { return -h * std::cos(h * (1.0 - t)); }};
}

CfmSample cfm_target(const AffineSchedule& as, std::span<const double> x1,
                     std::span<const double> x0, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("cfm_target: t outside [0, 1]");
  const auto d = static_cast<Eigen::Index>(x1.size());
  const double mu = as.mu(t), sigma = as.sigma(t), dmu = as.dmu(t), dsigma = as.dsigma(t);
  CfmSample s{Eigen::VectorXd(d), Eigen::VectorXd(d)};
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto k = static_cast<std::size_t>(i);
    s.x_t(i) = mu * x1[k] + sigma * x0[k];
    s.target(i) = dmu * x1[k] + dsigma * x0[k];
  }
  return s;
}

namespace {

double batch_mse(const MlpVelocity& net, const Batch& b) {
  const Eigen::MatrixXd out = net.forward_batch(b.x, b.t);
  return (out - b.target).squaredNorm() / static_cast<double>(b.x.cols());
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  return splitmix64(seed ^ stream_tag(purpose));
}

// Shared Adam loop with validation and ladder bookkeeping.
TrainResult run_training(MlpVelocity net, const TrainConfig& cfg, const std::string& schedule_id,
                         const std::function<Batch(std::size_t)>& make_batch,
                         const std::function<double(const MlpVelocity&)>& validate_net) {
  cfg.validate();
  Adam adam(net.param_count(), cfg.adam);
  TrainResult result;
  std::size_t next_threshold = 0;
  double last_val = validate_net(net);
  auto meta = [&](std::size_t step, double val) {
    return CheckpointMeta{step, val, schedule_id, cfg.seed};
  };

  std::size_t step = 0;
  for (; step < cfg.max_steps; ++step) {
    const Batch batch = make_batch(step);
    LossGrad lg;
    try {
      lg = mlp_loss_grad(net, batch);
    } catch (const NumericError& e) {
      throw TrainingError(std::string("training diverged: ") + e.what(), step);
    }
    const double lr = cfg.lr.at(step);
    adam.step(net.params(), lg.grad, lr);
    for (double p : net.params()) {
      if (!std::isfinite(p)) throw TrainingError("parameters became non-finite", step);
    }

    const std::size_t done = step + 1;
    if (done % cfg.val_every != 0 && done != cfg.max_steps) continue;
    last_val = validate_net(net);
    if (!std::isfinite(last_val)) throw TrainingError("validation MSE is not finite", done);
    result.log.push_back({done, lg.loss, last_val, lr});

    bool crossed = false;
    while (next_threshold < cfg.ladder.size() && last_val <= cfg.ladder[next_threshold]) {
      ++next_threshold;
      crossed = true;
    }
    if (crossed) result.ladder.push_back(make_checkpoint(net, meta(done, last_val)));
    if (cfg.stop_when_ladder_complete && !cfg.ladder.empty() &&
        next_threshold == cfg.ladder.size()) {
      step = done;
      break;
    }
  }
  const std::size_t final_step = std::min(step, cfg.max_steps);
  result.final = make_checkpoint(net, meta(final_step, last_val));
  if (!cfg.ladder.empty() && !(last_val <= cfg.ladder.front())) {
    throw TrainingError("final validation MSE " + format_double(last_val) +
                            " above the first ladder threshold " +
                            format_double(cfg.ladder.front()),
                        final_step);
  }
  return result;
}

}  // namespace

double validation_mse(const VelocityField& field, const Schedule& s, const TimeGrid& grid,
                      std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("validation_mse: n must be positive");
  const std::size_t d = field.dim();
  const auto di = static_cast<Eigen::Index>(d);
  const auto ni = static_cast<Eigen::Index>(n);
  const RandomStream stream = RandomStream(seed).split("validation");
  Eigen::MatrixXd z(di, ni);
  for (std::size_t i = 0; i < n; ++i) stream.normals(i, std::span<double>(z.col(static_cast<Eigen::Index>(i)).data(), d));

  const auto* mlp = dynamic_cast<const MlpVelocity*>(&field);
  double total = 0.0;
  std::vector<double> out(d);
  for (double t : grid.points()) {
    const double sigma = s.sigma(t);
    const double a = s.rate(t);
    const Eigen::MatrixXd x = sigma * z;
    double sum = 0.0;
    if (mlp != nullptr) {
      const std::vector<double> times(n, t);
      sum = (mlp->forward_batch(x, times) - a * x).squaredNorm();
    } else {
      for (Eigen::Index i = 0; i < ni; ++i) {
        field.evaluate(std::span<const double>(x.col(i).data(), d), t, std::span<double>(out));
        for (std::size_t j = 0; j < d; ++j) {
          const double r = out[j] - a * x(static_cast<Eigen::Index>(j), i);
          sum += r * r;
        }
      }
    }
    total += sum / static_cast<double>(n);
  }
  return total / static_cast<double>(grid.count());
}

double validation_mse(const Checkpoint& ckpt, const Schedule& s, const TimeGrid& grid,
                      std::size_t n, std::uint64_t seed) {
  return validation_mse(ckpt.network(), s, grid, n, seed);
}

TrainResult train_direct_fm(const Schedule& s, MlpVelocity net, const TrainConfig& cfg) {
  const std::size_t d = net.dim();
  const auto di = static_cast<Eigen::Index>(d);
  const RandomStream train = RandomStream(derive_seed(cfg.seed, "train_direct"));
  const RandomStream t_stream = train.split("t");
  const RandomStream x_stream = train.split("x");
  const TimeGrid val_grid(cfg.val_times);
  const std::uint64_t val_seed = derive_seed(cfg.seed, "validation_probes");

  auto make_batch = [&](std::size_t step) {
    const auto b = static_cast<Eigen::Index>(cfg.batch_size);
    Batch batch{Eigen::MatrixXd(di, b), std::vector<double>(cfg.batch_size), Eigen::MatrixXd(di, b)};
    std::vector<double> z(d);
    for (Eigen::Index i = 0; i < b; ++i) {
      const std::uint64_t index = step * cfg.batch_size + static_cast<std::uint64_t>(i);
      const double t = t_stream.uniform(index);
      x_stream.normals(index, z);
      const double sigma = s.sigma(t);
      const double a = s.rate(t);
      batch.t[static_cast<std::size_t>(i)] = t;
      for (Eigen::Index j = 0; j < di; ++j) {
        const double x = sigma * z[static_cast<std::size_t>(j)];
        batch.x(j, i) = x;
        batch.target(j, i) = a * x;
      }
    }
    return batch;
  };
  auto validate_net = [&](const MlpVelocity& m) {
    return validation_mse(m, s, val_grid, cfg.val_n, val_seed);
  };
  return run_training(std::move(net), cfg, s.name(), make_batch, validate_net);
}

TrainResult train_affine_cfm(const Eigen::MatrixXd& data, const AffineSchedule& as,
                             const ClipWindow& clip, MlpVelocity net, const TrainConfig& cfg) {
  clip.validate();
  if (data.rows() == 0) throw std::invalid_argument("train_affine_cfm: empty dataset");
  const std::size_t d = net.dim();
  if (static_cast<std::size_t>(data.cols()) != d) {
    throw std::invalid_argument("train_affine_cfm: data dimension does not match the network");
  }
  const auto di = static_cast<Eigen::Index>(d);
  const auto n_data = static_cast<std::uint64_t>(data.rows());

  // Draws sample `index` of a stream: data row, clipped time, base noise.
  auto draw = [&](const RandomStream& stream, std::uint64_t index, Batch& batch, Eigen::Index col) {
    const auto row = static_cast<Eigen::Index>(
        std::min<std::uint64_t>(n_data - 1, static_cast<std::uint64_t>(stream.uniform(index, 0) *
                                                                       static_cast<double>(n_data))));
    const double t = clip.t0 + (clip.T - clip.t0) * stream.uniform(index, 1);
    std::vector<double> x0(d);
    stream.split("noise").normals(index, x0);
    const Eigen::VectorXd x1 = data.row(row).transpose();
    const CfmSample s = cfm_target(as, std::span<const double>(x1.data(), d), x0, t);
    batch.x.col(col) = s.x_t;
    batch.target.col(col) = s.target;
    batch.t[static_cast<std::size_t>(col)] = t;
  };

  const RandomStream train = RandomStream(derive_seed(cfg.seed, "train_affine"));
  const RandomStream held_out = RandomStream(derive_seed(cfg.seed, "validation_probes"));
  const std::size_t val_count = cfg.val_n * cfg.val_times;
  Batch val{Eigen::MatrixXd(di, static_cast<Eigen::Index>(val_count)),
            std::vector<double>(val_count),
            Eigen::MatrixXd(di, static_cast<Eigen::Index>(val_count))};
  for (std::size_t i = 0; i < val_count; ++i) draw(held_out, i, val, static_cast<Eigen::Index>(i));

  auto make_batch = [&](std::size_t step) {
    const auto b = static_cast<Eigen::Index>(cfg.batch_size);
    Batch batch{Eigen::MatrixXd(di, b), std::vector<double>(cfg.batch_size), Eigen::MatrixXd(di, b)};
    for (Eigen::Index i = 0; i < b; ++i) {
      draw(train, step * cfg.batch_size + static_cast<std::uint64_t>(i), batch, i);
    }
    return batch;
  };
  auto validate_net = [&](const MlpVelocity& m) { return batch_mse(m, val); };
  return run_training(std::move(net), cfg, "affine", make_batch, validate_net);
}

namespace {

nlohmann::json config_json(const TrainConfig& c) {
  nlohmann::json j;
  j["batch_size"] = c.batch_size;
  j["max_steps"] = c.max_steps;
  j["lr_peak"] = c.lr.peak;
  j["lr_warmup_steps"] = c.lr.warmup_steps;
  j["lr_final_fraction"] = c.lr.final_fraction;
  j["adam_beta1"] = c.adam.beta1;
  j["adam_beta2"] = c.adam.beta2;
  j["adam_eps"] = c.adam.eps;
  j["seed"] = c.seed;
  j["val_n"] = c.val_n;
  j["val_times"] = c.val_times;
  j["val_every"] = c.val_every;
  j["ladder"] = c.ladder;
  j["stop_when_ladder_complete"] = c.stop_when_ladder_complete;
  return j;
}

std::string ckpt_name(const Checkpoint& c) { return "ckpt_" + std::to_string(c.step) + ".json"; }

}  // namespace

void write_run_directory(const std::string& dir, const RunInfo& info, const TrainResult& result) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["mode"] = info.mode;
  manifest["schedule_id"] = info.schedule_id;
  manifest["architecture"] = {{"widths", info.widths}, {"activation", "tanh"},
                              {"time_input", "raw"}};
  manifest["config"] = config_json(info.config);
  manifest["seed"] = info.config.seed;
  nlohmann::json ladder = nlohmann::json::array();
  for (const auto& c : result.ladder) {
    write_file_atomic(dir + "/" + ckpt_name(c), checkpoint_save(c));
    ladder.push_back({{"step", c.step}, {"val_mse", c.val_mse}, {"file", ckpt_name(c)}});
  }
  write_file_atomic(dir + "/" + ckpt_name(result.final), checkpoint_save(result.final));
  manifest["ladder"] = ladder;
  manifest["final"] = {{"step", result.final.step},
                       {"val_mse", result.final.val_mse},
                       {"file", ckpt_name(result.final)}};
  write_file_atomic(dir + "/manifest.json", manifest.dump(2) + "\n");

  CsvTable log({"step", "train_loss", "val_mse", "lr"});
  for (const auto& r : result.log) {
    log.row().cell(std::to_string(r.step)).cell(r.train_loss).cell(r.val_mse).cell(r.lr);
  }
  write_file_atomic(dir + "/train_log.csv", log.str());
}

std::vector<Checkpoint> load_run_ladder(const std::string& dir) {
  const std::string path = dir + "/manifest.json";
  if (!std::filesystem::exists(path)) {
    throw FormatError("no manifest.json in run directory " + dir);
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what());
  }
  std::vector<Checkpoint> out;
  for (const auto& entry : manifest.at("ladder")) {
    out.push_back(read_checkpoint_file(dir + "/" + entry.at("file").get<std::string>()));
  }
  return out;
}

}  // namespace flowkl
