// SPDX-License-Identifier: Apache-2.0
//
// mlbatch: train multi-label MLPs under different mini-batch selectors.
//
//   mlbatch train           one CV round per selector
//   mlbatch experiment      every selector x grid point x CV round, plus summary.csv
//   mlbatch inspect         one round with per-epoch U / C / w / P dumps
//   mlbatch validate-config parse and check a config, print the effective values
//   mlbatch synth           write a synthetic dataset in the native format
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mlbatch/config.hpp"
#include "mlbatch/dataset.hpp"
#include "mlbatch/error.hpp"
#include "mlbatch/harness.hpp"

namespace {

using namespace mlbatch;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string selector;
  std::optional<std::size_t> jobs;
  std::string dump;
  std::string dataset;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value config file");
  cmd->add_option("--seed", f.seed, "PRNG seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--selector", f.selector, "selector name(s): ours,random,balance,active,recency,external");
  cmd->add_option("--jobs", f.jobs, "parallel worker slots");
  cmd->add_option("--dump", f.dump, "per-epoch dumps, any of U,C,w,P");
  cmd->add_option("--dataset", f.dataset, "dataset file (native #MLL format)");
  cmd->add_option("--set", f.overrides, "override any config key: --set key=value")->take_all();
}

ExperimentConfig resolve(const CommonFlags& f) {
  ExperimentConfig cfg;
  if (!f.config.empty()) cfg = load_config(f.config);
  if (!f.dataset.empty()) set_config_value(cfg, "dataset", f.dataset);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) set_config_value(cfg, "out", f.out);
  if (!f.selector.empty()) set_config_value(cfg, "selector", f.selector);
  if (f.jobs) cfg.jobs = *f.jobs;
  if (!f.dump.empty()) set_config_value(cfg, "dump", f.dump);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

int run_single(const ExperimentConfig& cfg, std::size_t fold, bool with_dumps) {
  validate_config(cfg);
  if (cfg.dataset.empty()) throw ConfigError("no dataset given");
  const auto dataset = load_dataset(cfg.dataset);
  const auto plan = experiment_folds(cfg, dataset.labels);
  if (fold >= plan.k()) throw ConfigError(fmt::format("fold {} out of range for {} folds", fold, plan.k()));
  std::shared_ptr<const ExternalScores> external;
  if (!cfg.external_scores.empty())
    external = std::make_shared<const ExternalScores>(ExternalScores::load(cfg.external_scores));

  std::filesystem::create_directories(cfg.out);
  const auto points = grid_points(cfg);
  const bool grid_active = has_grid(cfg);
  int rc = 0;
  for (const auto& selector : cfg.selectors) {
    for (std::size_t g = 0; g < points.size(); ++g) {
      DumpOptions dumps;
      if (with_dumps) {
        auto dir = cfg.out;
        if (cfg.selectors.size() > 1 || grid_active)
          dir /= grid_active ? fmt::format("{}_{}", selector, points[g].tag()) : selector;
        dumps = DumpOptions::from_config(cfg, dir);
      }
      RunInputs in{&dataset, plan.split(fold), fold, selector, points[g], g, external, &dumps};
      const auto r = run_training(cfg, in);
      std::ofstream csv(cfg.out / epoch_csv_name(selector, fold, points[g], grid_active));
      write_epoch_csv(csv, r.epochs);
      if (cfg.save_params) {
        std::ofstream p(cfg.out / fmt::format("params_{}_{}.txt", selector, fold));
        save_params(p, r.final_params);
      }
      fmt::print("{}{} fold {}: best epoch {} | val macro-AUC {:.4f} | test macro-AUC {:.4f} "
                 "ranking loss {:.4f} hamming loss {:.4f} [{}]\n",
                 selector, grid_active ? " " + points[g].tag() : "", fold, r.best_epoch,
                 r.best_val_macro_auc, r.test.macro_auc, r.test.ranking_loss, r.test.hamming_loss,
                 r.status);
      if (r.status != "ok") rc = kExitNumeric;
    }
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-driven mini-batch selection for multi-label training"};
  app.require_subcommand(1);

  CommonFlags train_flags, exp_flags, inspect_flags, validate_flags;
  std::size_t train_fold = 0, inspect_fold = 0;
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "log per-run progress");

  auto* train = app.add_subcommand("train", "train one CV round per selector");
  add_common(train, train_flags);
  train->add_option("--fold", train_fold, "CV round (test fold index)");

  auto* experiment = app.add_subcommand("experiment", "cross-validated selector comparison");
  add_common(experiment, exp_flags);

  auto* inspect = app.add_subcommand("inspect", "one round with per-epoch U/C/w/P dumps");
  add_common(inspect, inspect_flags);
  inspect->add_option("--fold", inspect_fold, "CV round (test fold index)");

  auto* validate = app.add_subcommand("validate-config", "check a config and print effective values");
  add_common(validate, validate_flags);

  std::size_t synth_n = 400, synth_d = 20, synth_q = 5;
  std::uint64_t synth_seed = 1;
  double synth_noise = 0.05;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--n", synth_n, "instances");
  synth->add_option("--d", synth_d, "features");
  synth->add_option("--q", synth_q, "labels");
  synth->add_option("--seed", synth_seed, "PRNG seed");
  synth->add_option("--noise", synth_noise, "label flip probability");
  synth->add_option("--out", synth_out, "output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (*train) return run_single(resolve(train_flags), train_fold, false);
    if (*inspect) {
      auto cfg = resolve(inspect_flags);
      if (cfg.dump.empty() && cfg.corr_diff.empty())
        throw ConfigError("inspect needs --dump (any of U,C,w,P) or corr_diff");
      return run_single(cfg, inspect_fold, true);
    }
    if (*experiment) {
      const auto cfg = resolve(exp_flags);
      if (cfg.dataset.empty()) throw ConfigError("no dataset given");
      const auto result = run_experiment(cfg);
      for (const auto& row : result.summary)
        if (row.fold == "mean")
          fmt::print("{:<10} {:<28} test macro-AUC {:.4f} +/- {:.4f}  [{}]\n", row.selector,
                     row.grid.tag(), row.test_macro_auc, row.test_macro_auc_std, row.status);
      for (const auto& r : result.runs)
        if (r.status.rfind("numeric failure", 0) == 0) return kExitNumeric;
      return 0;
    }
    if (*validate) {
      const auto cfg = resolve(validate_flags);
      validate_config(cfg);
      write_config(std::cout, cfg);
      return 0;
    }
    if (*synth) {
      Rng rng(synth_seed);
      save_dataset(synth_out, make_synthetic(synth_n, synth_d, synth_q, rng, synth_noise));
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
