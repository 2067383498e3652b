#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flowkl {

/// Settings shared by every command. Empty schedule or ladder fields take the
/// per-command default (see `resolved_schedule` / `resolved_ladder`).
struct ExperimentConfig {
  std::string command;  ///< verify-identity, verify-bound, train, counterexample
  std::string mode;     ///< analytic, learned, synthetic, checkpoints

  std::string schedule_p = "a1";
  std::string schedule_q = "a3";
  std::string schedule;

  std::vector<double> betas;  ///< empty: 0, 0.025, ..., 0.2
  std::vector<double> ladder;

  std::size_t n = 50000;
  std::size_t grid = 201;
  std::size_t ode_steps = 200;
  std::uint64_t seed = 0;
  std::string out = "out";

  std::string run;       ///< existing run directory with checkpoints
  bool train = false;    ///< train when no run directory is given
  std::size_t train_steps = 20000;

  double M = 1.0;
  double eps = 0.01;
  double tau = 0.5;
  std::vector<double> b{1.0, 0.0};

  /// Sets one key from its text form; keys match the long flag names with
  /// '-' or '_' accepted. Throws UsageError on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  /// Applies `key = value` lines; '#' starts a comment.
  void apply_file_text(std::string_view text);
  /// Throws UsageError on unsupported (command, mode) pairs or bad ranges.
  void validate() const;

  std::string resolved_schedule() const;
  std::vector<double> resolved_betas() const;
  std::vector<double> resolved_ladder() const;

  /// Every key in a fixed order, one `key = value` per line.
  std::string effective_text() const;
};

/// Parses "lo:hi:step" or a comma-separated list.
std::vector<double> parse_beta_list(std::string_view text);
/// Comma-separated doubles.
std::vector<double> parse_double_list(std::string_view text);

struct ExperimentOutcome {
  bool ok = false;                 ///< every satisfied / tracking flag held
  std::vector<std::string> files;  ///< written paths
  std::string summary;             ///< short human-readable result
};

ExperimentOutcome run_verify_identity(const ExperimentConfig& cfg);
ExperimentOutcome run_verify_bound(const ExperimentConfig& cfg);
ExperimentOutcome run_train(const ExperimentConfig& cfg);
ExperimentOutcome run_counterexample(const ExperimentConfig& cfg);

/// Validates and dispatches on `cfg.command`; writes config.txt to the output
/// directory first.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg);

}  // namespace flowkl
