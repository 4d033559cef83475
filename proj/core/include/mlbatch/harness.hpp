// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "mlbatch/config.hpp"
#include "mlbatch/dataset.hpp"
#include "mlbatch/metrics.hpp"
#include "mlbatch/model.hpp"

namespace mlbatch {

struct EpochRecord {
  int epoch = 0;
  std::string selector;
  std::size_t fold = 0;
  double train_loss = 0.0;
  double val_macro_auc = 0.0;
  double val_ranking_loss = 0.0;
  double val_hamming_loss = 0.0;
  double pressure = 1.0;
  double wall_seconds = 0.0;
};

inline constexpr const char* kEpochCsvHeader =
    "epoch,selector,fold,train_loss,val_macro_auc,val_ranking_loss,val_hamming_loss,pressure,"
    "wall_seconds";

void write_epoch_csv(std::ostream& out, const std::vector<EpochRecord>& records);

/// Where and what to dump per epoch. Files land directly in `dir`.
struct DumpOptions {
  std::filesystem::path dir;
  bool uncertainty = false;   ///< U_epoch_<t>.csv
  bool correlation = false;   ///< corr_epoch_<t>.csv
  bool weights = false;       ///< weights_epoch_<t>.csv (w, Q(w))
  bool probabilities = false; ///< weights_epoch_<t>.csv (P)
  std::vector<int> corr_diff; ///< {a, b}: corr_diff_<a>_<b>.csv = C[b] - C[a]

  static DumpOptions from_config(const ExperimentConfig& cfg, std::filesystem::path dir);
  bool any() const { return uncertainty || correlation || weights || probabilities || !corr_diff.empty(); }
};

struct RunResult {
  std::string selector;
  std::size_t fold = 0;
  GridPoint grid;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  ///< 0 when no epoch produced a finite validation AUC
  double best_val_macro_auc = 0.0;
  EvaluationReport test;  ///< test metrics at best_epoch
  std::string status = "ok";
  MlpParams final_params;
};

/// Everything a single training run needs besides the config.
struct RunInputs {
  const MultiLabelDataset* dataset = nullptr;  ///< unscaled
  FoldPlan::Split split;
  std::size_t fold = 0;
  std::string selector;
  GridPoint grid;
  std::size_t grid_index = 0;
  std::shared_ptr<const ExternalScores> external;
  const DumpOptions* dumps = nullptr;
};

/// Seed of the PRNG stream for one (fold, grid point) cell. Selectors in
/// the same cell share the stream, so they start from the same weights
/// and the same warm-up batches.
std::uint64_t cell_seed(std::uint64_t seed, std::size_t fold, std::size_t grid_index);

/// The fold plan used by run_experiment for this config and labels.
FoldPlan experiment_folds(const ExperimentConfig& cfg, const Matrix& labels);

/// Trains one model with one selector on one CV round. Numeric failures
/// end the run early with status "numeric failure: ..." and keep the
/// records so far; other errors propagate.
RunResult run_training(const ExperimentConfig& cfg, const RunInputs& inputs);

/// Metrics that tolerate degenerate validation sets: undefined metrics
/// become NaN instead of throwing.
EvaluationReport evaluate_lenient(const Matrix& scores, const Matrix& labels);

struct SummaryRow {
  std::string selector;
  GridPoint grid;
  std::string fold;  ///< fold index or "mean"
  double best_epoch = 0.0;
  double test_macro_auc = 0.0, test_macro_auc_std = 0.0;
  double test_ranking_loss = 0.0, test_ranking_loss_std = 0.0;
  double test_hamming_loss = 0.0, test_hamming_loss_std = 0.0;
  double best_val_macro_auc = 0.0, best_val_macro_auc_std = 0.0;
  std::string status;
};

inline constexpr const char* kSummaryCsvHeader =
    "selector,s0,window,lambda1,fold,best_epoch,test_macro_auc,test_macro_auc_std,"
    "test_ranking_loss,test_ranking_loss_std,test_hamming_loss,test_hamming_loss_std,"
    "best_val_macro_auc,best_val_macro_auc_std,status";

struct ExperimentResult {
  std::vector<RunResult> runs;
  std::vector<SummaryRow> summary;
};

/// File name of a run's epoch log inside the output directory.
std::string epoch_csv_name(const std::string& selector, std::size_t fold, const GridPoint& grid,
                           bool grid_active);

/// Runs every (selector, grid point, CV round) cell, `jobs` at a time,
/// and writes the epoch logs plus summary.csv into cfg.out.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Fold rows followed by one mean row (with standard deviations) per
/// (selector, grid point).
std::vector<SummaryRow> summarize(const std::vector<RunResult>& runs);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

}  // namespace mlbatch
