// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mlbatch/selectors.hpp"

namespace mlbatch {

/// Everything a run or an experiment needs. Loaded from a flat
/// `key = value` file (see README for the schema); command-line flags
/// override file keys.
struct ExperimentConfig {
  std::filesystem::path dataset;
  std::vector<std::string> selectors{"ours"};
  std::size_t batch_size = 128;
  int epochs = 100;
  int warmup = 5;
  std::size_t window = 5;
  double lambda1 = 0.5;
  double initial_pressure = 100.0;
  int bins = 10;
  std::vector<int> hidden{128};
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::size_t folds = 5;
  std::size_t rounds = 0;  ///< CV rounds to run; 0 runs all `folds`
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::size_t jobs = 1;

  /// full | current_only (lambda1 = 0) | window_only (lambda1 = 1) |
  /// no_correlation (C = I)
  std::string ablation = "full";
  bool refresh_full_epoch = false;

  std::vector<double> grid_s0;
  std::vector<std::size_t> grid_window;
  std::vector<double> grid_lambda1;

  std::vector<std::string> dump;  ///< subset of U, C, w, P
  std::vector<int> corr_diff;     ///< two epochs: writes C[b] - C[a]
  std::filesystem::path external_scores;
  bool save_params = false;
};

/// Applies one key. Throws ConfigError for unknown keys or bad values.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Parses `key = value` lines; '#' starts a comment.
ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Writes every key in the parseable format.
void write_config(std::ostream& out, const ExperimentConfig& cfg);

/// Throws ConfigError describing the first invalid setting.
void validate_config(const ExperimentConfig& cfg);

/// One point of the s0 x T x lambda1 grid.
struct GridPoint {
  double initial_pressure = 100.0;
  std::size_t window = 5;
  double lambda1 = 0.5;

  /// File-name friendly label, e.g. "s0-100_T-5_lambda1-0.5".
  std::string tag() const;
};

bool has_grid(const ExperimentConfig& cfg);
std::vector<GridPoint> grid_points(const ExperimentConfig& cfg);

/// Selector settings for a grid point with ablations applied.
SelectorConfig selector_config(const ExperimentConfig& cfg, const GridPoint& point);

/// Rejects selector settings whose warm-up cannot fill the windows the
/// selector needs.
void check_warmup_fills(std::string_view selector, const SelectorConfig& sc, bool refresh_full_epoch);

}  // namespace mlbatch
