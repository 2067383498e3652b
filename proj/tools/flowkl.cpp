// flowkl: runs the identity, bound, training and counterexample experiments.
//
// Exit codes: 0 all checks hold, 1 a check failed, 2 usage error, 3 runtime error.

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "flowkl/errors.hpp"
#include "flowkl/experiments.hpp"
#include "flowkl/io.hpp"

namespace {

struct OptionSpec {
  const char* name;
  const char* help;
};

struct Subcommand {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> values;
  bool train = false;
};

void add_options(Subcommand& sub, const std::vector<OptionSpec>& specs) {
  for (const auto& s : specs) {
    sub.app->add_option(std::string("--") + s.name, sub.values[s.name], s.help);
  }
}

const std::vector<OptionSpec> kMcOptions = {
    {"n", "Monte-Carlo samples per grid point (default 50000)"},
    {"grid", "time grid points on [0, 1] (default 201)"},
    {"ode-steps", "RK4 steps per unit time (default 200)"},
    {"seed", "root seed (default: FLOWKL_SEED, else 0)"},
    {"out", "output directory (default out)"},
    {"config", "key = value config file; flags override it"},
};

const std::vector<OptionSpec> kTrainOptions = {
    {"run", "existing run directory with checkpoints"},
    {"ladder", "comma-separated validation MSE thresholds"},
    {"train-steps", "maximum training steps (default 20000)"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow matching KL identity and bound experiments"};
  app.require_subcommand(1);

  Subcommand identity, bound, train, counter;
  identity.app = app.add_subcommand("verify-identity", "KL evolution identity curves");
  add_options(identity, kMcOptions);
  add_options(identity, kTrainOptions);
  add_options(identity, {{"mode", "analytic or learned"},
                         {"schedule-p", "p schedule in analytic mode (default a1)"},
                         {"schedule-q", "q schedule in analytic mode (default a3)"},
                         {"schedule", "training schedule in learned mode (default a2)"}});
  identity.app->add_flag("--train", identity.train, "train when no --run is given");

  bound.app = app.add_subcommand("verify-bound", "KL <= eps sqrt(S) bound sweep");
  add_options(bound, kMcOptions);
  add_options(bound, kTrainOptions);
  add_options(bound, {{"mode", "synthetic or checkpoints"},
                      {"schedule", "path schedule (default a3 synthetic, a1 checkpoints)"},
                      {"betas", "lo:hi:step or comma list (default 0:0.2:0.025)"}});
  bound.app->add_flag("--train", bound.train, "train when no --run is given");

  train.app = app.add_subcommand("train", "train a velocity network and write a run directory");
  add_options(train, {{"schedule", "path schedule (default a2)"},
                      {"ladder", "comma-separated validation MSE thresholds"},
                      {"train-steps", "maximum training steps (default 20000)"},
                      {"seed", "root seed (default: FLOWKL_SEED, else 0)"},
                      {"out", "run directory (default out)"},
                      {"config", "key = value config file; flags override it"}});

  counter.app = app.add_subcommand("counterexample", "weak-solution counterexample report");
  add_options(counter, kMcOptions);
  add_options(counter, {{"M", "KL lower bound (default 1)"},
                        {"eps", "flow matching loss (default 0.01)"},
                        {"tau", "jump time (default 0.5)"},
                        {"b", "comma-separated tilt direction (default 1,0)"}});

  CLI11_PARSE(app, argc, argv);

  Subcommand* chosen = nullptr;
  for (Subcommand* s : {&identity, &bound, &train, &counter}) {
    if (s->app->parsed()) chosen = s;
  }

  try {
    flowkl::ExperimentConfig cfg;
    cfg.command = chosen->app->get_name();
    if (const char* env = std::getenv("FLOWKL_SEED"); env && *env) cfg.set("seed", env);
    if (chosen->app->count("--config") > 0) {
      cfg.apply_file_text(flowkl::read_file(chosen->values["config"]));
    }
    for (const auto& [name, value] : chosen->values) {
      if (name == "config" || chosen->app->count("--" + name) == 0) continue;
      cfg.set(name, value);
    }
    if (chosen->train) cfg.train = true;
    cfg.command = chosen->app->get_name();

    const flowkl::ExperimentOutcome outcome = flowkl::run_experiment(cfg);
    for (const auto& f : outcome.files) std::cout << "wrote " << f << '\n';
    std::cout << (outcome.ok ? "OK: " : "FAILED: ") << outcome.summary << '\n';
    return outcome.ok ? 0 : 1;
  } catch (const flowkl::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
