#include "flowkl/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "flowkl/checkpoint.hpp"
#include "flowkl/counterexample.hpp"
#include "flowkl/errors.hpp"
#include "flowkl/estimators.hpp"
#include "flowkl/gaussian_paths.hpp"
#include "flowkl/io.hpp"
#include "flowkl/mlp.hpp"
#include "flowkl/rng.hpp"
#include "flowkl/schedule.hpp"
#include "flowkl/trainer.hpp"

namespace flowkl {

namespace {

constexpr const char* kBlack = "#222222";
constexpr const char* kRed = "#c0392b";

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw UsageError(std::string(key) + ": not a number: '" + s + "'");
  }
  return v;
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw UsageError(std::string(key) + ": not a nonnegative integer: '" + s + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw UsageError(std::string(key) + ": not a boolean: '" + s + "'");
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Schedule schedule_or_usage(const std::string& id) {
  try {
    return Schedule::from_id(id);
  } catch (const std::exception& e) {
    throw UsageError("unknown schedule '" + id + "'");
  }
}

McConfig mc_config(const ExperimentConfig& cfg) {
  McConfig mc;
  mc.n = cfg.n;
  mc.seed = cfg.seed;
  mc.grid = TimeGrid(cfg.grid);
  mc.ode = IvpConfig{cfg.ode_steps, Direction::Backward};
  mc.dim = kDefaultDim;
  return mc;
}

std::string path_in(const ExperimentConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out) / name).string();
}

void write_csv_and_svg(const ExperimentConfig& cfg, const std::string& stem, const CsvTable& table,
                       const PlotSpec& plot, ExperimentOutcome& outcome) {
  const std::string csv = table.str();
  const std::string csv_path = path_in(cfg, stem + ".csv");
  const std::string svg_path = path_in(cfg, stem + ".svg");
  write_file_atomic(csv_path, csv);
  write_file_atomic(svg_path, render_svg(plot, checksum_hex(csv)));
  outcome.files.push_back(csv_path);
  outcome.files.push_back(svg_path);
}

TrainConfig train_config(const ExperimentConfig& cfg, std::vector<double> ladder) {
  TrainConfig tc;
  tc.seed = cfg.seed;
  tc.max_steps = cfg.train_steps;
  tc.lr.total_steps = cfg.train_steps;
  tc.lr.warmup_steps = std::min<std::size_t>(tc.lr.warmup_steps, cfg.train_steps / 10);
  tc.ladder = std::move(ladder);
  return tc;
}

// Trains on `schedule` and writes the run directory under <out>/run.
TrainResult train_into(const ExperimentConfig& cfg, const std::string& schedule_id,
                       const std::vector<double>& ladder, const std::string& dir,
                       ExperimentOutcome& outcome) {
  const Schedule s = schedule_or_usage(schedule_id);
  const TrainConfig tc = train_config(cfg, ladder);
  const auto widths = MlpVelocity::default_widths(kDefaultDim);
  const MlpVelocity net = MlpVelocity::init(widths, splitmix64(cfg.seed ^ 0x6e6574696e6974ULL));
  TrainResult result = train_direct_fm(s, net, tc);
  write_run_directory(dir, RunInfo{"direct", schedule_id, widths, tc}, result);
  outcome.files.push_back((std::filesystem::path(dir) / "manifest.json").string());
  return result;
}

// Ladder checkpoints from --run, or from a fresh training run with --train.
std::vector<Checkpoint> obtain_ladder(const ExperimentConfig& cfg, const std::string& schedule_id,
                                      const std::vector<double>& ladder,
                                      ExperimentOutcome& outcome) {
  if (!cfg.run.empty()) {
    if (!std::filesystem::exists(std::filesystem::path(cfg.run) / "manifest.json")) {
      throw UsageError("run directory '" + cfg.run + "' has no manifest.json");
    }
    std::vector<Checkpoint> ckpts = load_run_ladder(cfg.run);
    if (ckpts.empty()) throw UsageError("run directory '" + cfg.run + "' has no checkpoints");
    return ckpts;
  }
  if (!cfg.train) {
    throw UsageError("mode '" + cfg.mode + "' needs checkpoints: pass --run DIR or --train");
  }
  return train_into(cfg, schedule_id, ladder, path_in(cfg, "run"), outcome).ladder;
}

}  // namespace

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> out;
  std::string s = trim(text);
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(parse_double("list", std::string_view(s).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<double> parse_beta_list(std::string_view text) {
  const std::string s = trim(text);
  if (s.find(':') == std::string::npos) return parse_double_list(s);
  const auto c1 = s.find(':');
  const auto c2 = s.find(':', c1 + 1);
  if (c2 == std::string::npos) throw UsageError("betas: expected lo:hi:step");
  const double lo = parse_double("betas", std::string_view(s).substr(0, c1));
  const double hi = parse_double("betas", std::string_view(s).substr(c1 + 1, c2 - c1 - 1));
  const double step = parse_double("betas", std::string_view(s).substr(c2 + 1));
  if (!(step > 0.0) || hi < lo) throw UsageError("betas: need step > 0 and hi >= lo");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) out[k] = lo + static_cast<double>(k) * step;
  return out;
}

void ExperimentConfig::set(std::string_view raw_key, std::string_view value) {
  std::string key = trim(raw_key);
  while (!key.empty() && key.front() == '-') key.erase(key.begin());
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string v = trim(value);
  if (key == "command") command = v;
  else if (key == "mode") mode = v;
  else if (key == "schedule_p") schedule_p = v;
  else if (key == "schedule_q") schedule_q = v;
  else if (key == "schedule") schedule = v;
  else if (key == "betas") betas = parse_beta_list(v);
  else if (key == "ladder") ladder = parse_double_list(v);
  else if (key == "n") n = parse_unsigned(key, v);
  else if (key == "grid") grid = parse_unsigned(key, v);
  else if (key == "ode_steps") ode_steps = parse_unsigned(key, v);
  else if (key == "seed") seed = parse_unsigned(key, v);
  else if (key == "out") out = v;
  else if (key == "run") run = v;
  else if (key == "train") train = parse_bool(key, v);
  else if (key == "train_steps") train_steps = parse_unsigned(key, v);
  else if (key == "M") M = parse_double(key, v);
  else if (key == "eps") eps = parse_double(key, v);
  else if (key == "tau") tau = parse_double(key, v);
  else if (key == "b") b = parse_double_list(v);
  else throw UsageError("unknown config key '" + std::string(raw_key) + "'");
}

void ExperimentConfig::apply_file_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    set(std::string_view(line).substr(0, eq), std::string_view(line).substr(eq + 1));
  }
}

void ExperimentConfig::validate() const {
  const bool pair_ok = (command == "verify-identity" && (mode == "analytic" || mode == "learned")) ||
                       (command == "verify-bound" && (mode == "synthetic" || mode == "checkpoints")) ||
                       command == "train" || command == "counterexample";
  if (!pair_ok) {
    throw UsageError("unsupported command/mode pair '" + command + "' / '" + mode + "'");
  }
  if (n < 2) throw UsageError("n must be at least 2");
  if (grid < 2) throw UsageError("grid must have at least 2 points");
  if (ode_steps < 1) throw UsageError("ode-steps must be at least 1");
  if (train_steps < 1) throw UsageError("train-steps must be at least 1");
  if (out.empty()) throw UsageError("out must be a directory path");
}

std::string ExperimentConfig::resolved_schedule() const {
  if (!schedule.empty()) return schedule;
  if (command == "verify-bound") return mode == "checkpoints" ? "a1" : "a3";
  return "a2";
}

std::vector<double> ExperimentConfig::resolved_betas() const {
  return betas.empty() ? parse_beta_list("0:0.2:0.025") : betas;
}

std::vector<double> ExperimentConfig::resolved_ladder() const {
  if (!ladder.empty()) return ladder;
  if (command == "verify-identity") return {0.05};
  return TrainConfig{}.ladder;
}

std::string ExperimentConfig::effective_text() const {
  std::ostringstream o;
  o << "command = " << command << '\n'
    << "mode = " << mode << '\n'
    << "schedule_p = " << schedule_p << '\n'
    << "schedule_q = " << schedule_q << '\n'
    << "schedule = " << resolved_schedule() << '\n'
    << "betas = " << join(resolved_betas()) << '\n'
    << "ladder = " << join(resolved_ladder()) << '\n'
    << "n = " << n << '\n'
    << "grid = " << grid << '\n'
    << "ode_steps = " << ode_steps << '\n'
    << "seed = " << seed << '\n'
    << "out = " << out << '\n'
    << "run = " << run << '\n'
    << "train = " << (train ? "true" : "false") << '\n'
    << "train_steps = " << train_steps << '\n'
    << "M = " << format_double(M) << '\n'
    << "eps = " << format_double(eps) << '\n'
    << "tau = " << format_double(tau) << '\n'
    << "b = " << join(b) << '\n';
  return o.str();
}

ExperimentOutcome run_verify_identity(const ExperimentConfig& cfg) {
  ExperimentOutcome outcome;
  const McConfig mc = mc_config(cfg);
  EstimatorReport report;
  std::optional<IdentityCurves> closed;
  std::string title;

  if (cfg.mode == "analytic") {
    const Schedule sp = schedule_or_usage(cfg.schedule_p);
    const Schedule sq = schedule_or_usage(cfg.schedule_q);
    const LinearField q(sq, kDefaultDim);
    report = identity_curves(sp, q, mc);
    closed = closed_form_identity_curves(sp, sq, mc.grid, kDefaultDim);
    title = "KL identity, " + cfg.schedule_p + " vs " + cfg.schedule_q;
  } else {
    const std::string id = cfg.resolved_schedule();
    const Schedule s = schedule_or_usage(id);
    const double target = cfg.resolved_ladder().back();
    const std::vector<Checkpoint> ckpts = obtain_ladder(cfg, id, cfg.resolved_ladder(), outcome);
    // The least-trained checkpoint that meets the target.
    const Checkpoint* chosen = nullptr;
    for (const auto& c : ckpts) {
      if (c.val_mse <= target) {
        chosen = &c;
        break;
      }
    }
    if (!chosen) {
      throw UsageError("no checkpoint with val_mse <= " + format_double(target));
    }
    const MlpVelocity net = chosen->network();
    report = identity_curves(s, net, mc);
    title = "KL identity, learned field on " + id + " (val_mse " + short_number(chosen->val_mse) +
            ")";
    outcome.summary = "checkpoint step " + std::to_string(chosen->step) + ", val_mse " +
                      format_double(chosen->val_mse) + "; ";
  }

  std::vector<std::string> header{"t",     "kl_hat", "kl_se",        "g_hat",
                                  "g_se",  "cum_integral", "cum_se"};
  if (closed) {
    header.insert(header.end(), {"kl_closed", "g_closed", "cum_closed"});
  }
  header.push_back("tracking");
  CsvTable table(header);
  for (std::size_t k = 0; k < report.t.size(); ++k) {
    table.row()
        .cell(report.t[k])
        .cell(report.kl_hat[k])
        .cell(report.kl_se[k])
        .cell(report.g_hat[k])
        .cell(report.g_se[k])
        .cell(report.cum_integral[k])
        .cell(report.cum_se[k]);
    if (closed) table.cell(closed->kl[k]).cell(closed->integrand[k]).cell(closed->cum_integral[k]);
    table.cell(static_cast<bool>(report.tracking[k]));
  }

  PlotSpec plot;
  plot.title = title;
  plot.x_label = "t";
  plot.y_label = "KL";
  plot.series.push_back({"kl_hat", report.t, report.kl_hat, kBlack});
  plot.series.push_back({"cum_integral", report.t, report.cum_integral, kRed});
  write_csv_and_svg(cfg, "identity", table, plot, outcome);

  outcome.ok = report.all_tracking();
  std::size_t misses = 0;
  for (bool f : report.tracking) misses += f ? 0 : 1;
  outcome.summary += "terminal kl_hat " + format_double(report.kl_hat.back()) +
                     ", cum_integral " + format_double(report.cum_integral.back()) + "; " +
                     (outcome.ok ? "tracking holds at every grid point"
                                 : std::to_string(misses) + " grid points fail tracking");
  return outcome;
}

ExperimentOutcome run_verify_bound(const ExperimentConfig& cfg) {
  ExperimentOutcome outcome;
  const McConfig mc = mc_config(cfg);
  const std::string id = cfg.resolved_schedule();
  const Schedule s = schedule_or_usage(id);

  struct Row {
    std::string label;
    double x = 0.0;  ///< plot abscissa: beta, or eps_total
    EstimatorReport report;
    std::optional<PerturbedBound> exact;
    std::optional<PerturbedBound> on_grid;
    bool agrees = true;
  };
  std::vector<Row> rows;

  if (cfg.mode == "synthetic") {
    for (double beta : cfg.resolved_betas()) {
      Row row;
      row.label = "beta=" + short_number(beta);
      row.x = beta;
      row.report = bound_check(s, perturbed_field(s, beta, kDefaultDim), mc);
      row.exact = closed_form_perturbed_bound(s, beta, kDefaultDim);
      row.on_grid = grid_perturbed_bound(s, beta, mc.grid, kDefaultDim);
      // MC totals against the same-grid trapezoid of the closed-form integrands.
      const auto& r = row.report;
      auto near = [](double mc_value, double se, double exact) {
        return std::abs(mc_value - exact) <= 3.0 * se + kSolverAllowance;
      };
      row.agrees = near(r.eps_total, r.eps_total_se, row.on_grid->eps_total) &&
                   near(r.score_gap_total, r.score_gap_se, row.on_grid->score_gap_total) &&
                   near(r.kl_terminal, r.kl_terminal_se, row.exact->kl_terminal);
      rows.push_back(std::move(row));
    }
  } else {
    for (const Checkpoint& c : obtain_ladder(cfg, id, cfg.resolved_ladder(), outcome)) {
      Row row;
      row.label = "step=" + std::to_string(c.step) + " val_mse=" + short_number(c.val_mse);
      row.report = bound_check(s, c.network(), mc);
      row.x = row.report.eps_total;
      rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      return a.report.eps_total < b.report.eps_total;
    });
  }

  std::vector<std::string> header{"label",          "eps_total",  "score_gap_total",
                                  "bound_rhs",      "kl_terminal", "satisfied",
                                  "eps_total_se",   "score_gap_se", "kl_terminal_se",
                                  "propagated_se"};
  const bool synthetic = cfg.mode == "synthetic";
  if (synthetic) {
    header.insert(header.end(), {"eps_total_closed", "score_gap_closed", "bound_rhs_closed",
                                 "kl_terminal_closed", "closed_satisfied", "mc_agrees"});
  }
  CsvTable table(header);
  bool ok = true;
  std::size_t failures = 0;
  PlotSeries kl_series{"kl_terminal", {}, {}, kBlack};
  PlotSeries rhs_series{"eps_total sqrt(score_gap_total)", {}, {}, kRed};
  for (const Row& row : rows) {
    const auto& r = row.report;
    bool row_ok = r.satisfied;
    table.row()
        .cell(row.label)
        .cell(r.eps_total)
        .cell(r.score_gap_total)
        .cell(r.bound_rhs)
        .cell(r.kl_terminal)
        .cell(r.satisfied)
        .cell(r.eps_total_se)
        .cell(r.score_gap_se)
        .cell(r.kl_terminal_se)
        .cell(r.propagated_se);
    if (synthetic) {
      const PerturbedBound& e = *row.exact;
      const bool closed_ok = e.kl_terminal <= e.bound_rhs + 1e-8;
      table.cell(e.eps_total)
          .cell(e.score_gap_total)
          .cell(e.bound_rhs)
          .cell(e.kl_terminal)
          .cell(closed_ok)
          .cell(row.agrees);
      row_ok = row_ok && closed_ok && row.agrees;
    }
    if (!row_ok) ++failures;
    ok = ok && row_ok;
    const double x = row.x;
    kl_series.x.push_back(x);
    kl_series.y.push_back(r.kl_terminal);
    rhs_series.x.push_back(x);
    rhs_series.y.push_back(r.bound_rhs);
  }

  PlotSpec plot;
  plot.title = synthetic ? "Bound under constant perturbation on " + id
                         : "Bound across checkpoints on " + id;
  plot.x_label = synthetic ? "beta" : "eps_total";
  plot.y_label = "KL(p_1 || q_1)";
  plot.log_x = plot.log_y = !synthetic;
  plot.series = {kl_series, rhs_series};
  write_csv_and_svg(cfg, "bound", table, plot, outcome);

  outcome.ok = ok;
  outcome.summary = std::to_string(rows.size()) + " rows; " +
                    (ok ? "bound satisfied on every row"
                        : std::to_string(failures) + " rows fail");
  return outcome;
}

ExperimentOutcome run_train(const ExperimentConfig& cfg) {
  ExperimentOutcome outcome;
  const TrainResult result =
      train_into(cfg, cfg.resolved_schedule(), cfg.resolved_ladder(), cfg.out, outcome);
  outcome.ok = true;
  outcome.summary = std::to_string(result.ladder.size()) + " ladder checkpoints; final step " +
                    std::to_string(result.final.step) + ", val_mse " +
                    format_double(result.final.val_mse);
  return outcome;
}

ExperimentOutcome run_counterexample(const ExperimentConfig& cfg) {
  ExperimentOutcome outcome;
  CounterexampleSpec spec;
  spec.M = cfg.M;
  spec.eps = cfg.eps;
  spec.tau = cfg.tau;
  spec.b = cfg.b;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  CounterexampleCheck check;
  check.n = cfg.n;
  check.seed = cfg.seed;
  check.ode = IvpConfig{cfg.ode_steps, Direction::Backward};
  const CounterexampleReport report = verify_counterexample(spec, check);
  const std::string path = path_in(cfg, "counterexample.json");
  write_file_atomic(path, report_json(report));
  outcome.files.push_back(path);
  outcome.ok = report.passed;
  outcome.summary = "fm_loss " + format_double(report.fm_loss.closed_form) +
                    ", kl_path_integral " + format_double(report.kl.kl_path_integral) +
                    ", kl_direct " + format_double(report.kl.kl_direct) + ", kl_mc " +
                    format_double(report.kl_mc.value) + " +- " +
                    format_double(report.kl_mc.std_error);
  return outcome;
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string config_path = path_in(cfg, "config.txt");
  write_file_atomic(config_path, cfg.effective_text());
  ExperimentOutcome outcome;
  if (cfg.command == "verify-identity") outcome = run_verify_identity(cfg);
  else if (cfg.command == "verify-bound") outcome = run_verify_bound(cfg);
  else if (cfg.command == "train") outcome = run_train(cfg);
  else outcome = run_counterexample(cfg);
  outcome.files.insert(outcome.files.begin(), config_path);
  return outcome;
}

}  // namespace flowkl
