// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlbatch/model.hpp"
#include "mlbatch/rng.hpp"
#include "mlbatch/sampler.hpp"
#include "mlbatch/uncertainty.hpp"

namespace mlbatch {

struct SelectorConfig {
  std::size_t batch_size = 128;
  int warmup = 5;            ///< epochs 1..warmup use shuffled batches
  std::size_t window = 5;    ///< prediction window T
  double lambda1 = 0.5;      ///< weight of window fluctuation vs current entropy
  double initial_pressure = 100.0;
  int bins = 10;             ///< histogram bins for mutual information
  int total_epochs = 100;    ///< pressure reaches 1 at this epoch
  bool identity_correlation = false;
};

/// Decides which training instances form each mini-batch.
///
/// Per epoch the training loop calls on_epoch_start once, then
/// next_batch batches_per_epoch() times, reporting each batch's forward
/// probabilities through on_batch_forward. Indices are local to the
/// training set, in [0, n).
class BatchSelector {
 public:
  BatchSelector(std::size_t instances, std::size_t batch_size);
  virtual ~BatchSelector() = default;

  virtual std::string_view name() const = 0;
  virtual void on_epoch_start(int epoch, Rng& rng) = 0;
  virtual std::vector<std::size_t> next_batch(Rng& rng) = 0;
  virtual void on_batch_forward(std::span<const std::size_t> indices, const Matrix& probs);

  /// True when the selector keeps prediction histories, i.e. it wants
  /// every instance forwarded during warm-up.
  virtual bool tracks_predictions() const { return false; }

  /// Current selection pressure; 1 for selectors without one.
  virtual double pressure() const { return 1.0; }

  std::size_t instances() const noexcept { return instances_; }
  std::size_t batch_size() const noexcept { return batch_size_; }
  std::size_t batches_per_epoch() const noexcept { return instances_ / batch_size_; }

 private:
  std::size_t instances_;
  std::size_t batch_size_;
};

/// Shuffle once per epoch, then hand out consecutive chunks; the last
/// partial chunk is dropped.
class ShuffledChunks {
 public:
  ShuffledChunks(std::size_t instances, std::size_t batch_size);
  void reshuffle(Rng& rng);
  std::vector<std::size_t> next();

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
};

class RandomSelector final : public BatchSelector {
 public:
  RandomSelector(std::size_t instances, std::size_t batch_size);

  std::string_view name() const override { return "random"; }
  void on_epoch_start(int epoch, Rng& rng) override;
  std::vector<std::size_t> next_batch(Rng& rng) override;

 private:
  ShuffledChunks chunks_;
};

/// Greedy label-balanced assignment of instances, visited in `order`, to
/// floor(n / b) batches of size b. Each instance goes to the open batch
/// whose positive and negative counts per label move closest (L1) to the
/// per-batch targets b * pos_j / n and b * neg_j / n; ties take the lowest
/// batch index. An instance that
/// would push every open batch away from its target is held back while
/// the n mod b remainder allows.
std::vector<std::vector<std::size_t>> balance_assign(const Matrix& labels,
                                                     std::span<const std::size_t> order,
                                                     std::size_t batch_size);

class BalanceSelector final : public BatchSelector {
 public:
  BalanceSelector(Matrix labels, std::size_t batch_size);

  std::string_view name() const override { return "balance"; }
  void on_epoch_start(int epoch, Rng& rng) override;
  std::vector<std::size_t> next_batch(Rng& rng) override;

 private:
  Matrix labels_;
  std::vector<std::vector<std::size_t>> batches_;
  std::size_t cursor_ = 0;
};

/// Shared machinery for selectors that score samples and draw batches
/// from the pressure-controlled distribution. Epochs up to the warm-up
/// behave exactly like RandomSelector (same draws from the same stream).
class ScoredSelector : public BatchSelector {
 public:
  ScoredSelector(std::size_t instances, const SelectorConfig& config);

  void on_epoch_start(int epoch, Rng& rng) final;
  std::vector<std::size_t> next_batch(Rng& rng) final;
  double pressure() const override { return pressure_; }

  bool warming_up() const noexcept { return warming_up_; }
  const SelectorConfig& config() const noexcept { return config_; }
  const PressureSchedule& schedule() const noexcept { return schedule_; }

  /// Normalized weights and sampling distribution of the current epoch;
  /// empty during warm-up.
  const Vector& weights() const noexcept { return weights_; }
  const Vector& probabilities() const noexcept { return probs_; }

 protected:
  /// Normalized sample weights in [0, 1] for a post-warm-up epoch, or
  /// nullopt to fall back to shuffled batches for this epoch.
  virtual std::optional<Vector> epoch_weights(int epoch) = 0;

 private:
  SelectorConfig config_;
  PressureSchedule schedule_;
  ShuffledChunks chunks_;
  WeightedSampler sampler_;
  Vector weights_;
  Vector probs_;
  double pressure_ = 1.0;
  bool warming_up_ = true;
};

/// Uncertainty-driven selection: per-label entropy of the latest
/// prediction blended with window fluctuation, re-weighted by the
/// mutual-information correlation between label uncertainties.
class OursSelector final : public ScoredSelector {
 public:
  OursSelector(std::size_t instances, std::size_t labels, const SelectorConfig& config);

  std::string_view name() const override { return "ours"; }
  void on_batch_forward(std::span<const std::size_t> indices, const Matrix& probs) override;
  bool tracks_predictions() const override { return true; }

  const HistoryStore& histories() const noexcept { return histories_; }
  /// n x q; NaN where the window is not yet full.
  const Matrix& uncertainty() const noexcept { return uncertainty_; }
  /// Correlation used at the start of the current epoch (q x q).
  const Matrix& correlation() const noexcept { return correlation_; }

 protected:
  std::optional<Vector> epoch_weights(int epoch) override;

 private:
  HistoryStore histories_;
  Matrix uncertainty_;
  Matrix correlation_;
};

/// Baseline: sum over labels of the inflated standard deviation of every
/// prediction recorded so far.
class ActiveBiasSelector final : public ScoredSelector {
 public:
  ActiveBiasSelector(std::size_t instances, std::size_t labels, const SelectorConfig& config);

  std::string_view name() const override { return "active"; }
  void on_batch_forward(std::span<const std::size_t> indices, const Matrix& probs) override;
  bool tracks_predictions() const override { return true; }

  const HistoryStore& histories() const noexcept { return histories_; }

 protected:
  std::optional<Vector> epoch_weights(int epoch) override;

 private:
  HistoryStore histories_;
};

/// Baseline: sum over labels of the entropy of the window's binarized
/// predictions.
class RecencyBiasSelector final : public ScoredSelector {
 public:
  RecencyBiasSelector(std::size_t instances, std::size_t labels, const SelectorConfig& config);

  std::string_view name() const override { return "recency"; }
  void on_batch_forward(std::span<const std::size_t> indices, const Matrix& probs) override;
  bool tracks_predictions() const override { return true; }

  const HistoryStore& histories() const noexcept { return histories_; }

 protected:
  std::optional<Vector> epoch_weights(int epoch) override;

 private:
  HistoryStore histories_;
};

/// Per-epoch sample scores supplied from outside, keyed by dataset row.
///
/// CSV with header `epoch,instance,score`; `instance` is the 0-based row of
/// the dataset file. An epoch uses the most recent table at or before it.
class ExternalScores {
 public:
  static ExternalScores load(const std::filesystem::path& path);
  static ExternalScores parse(std::istream& in);

  /// Scores for the given dataset rows from the latest epoch <= `epoch`,
  /// or nullopt when no such epoch exists. Throws ParseError when a row
  /// has no score in that epoch.
  std::optional<Vector> lookup(int epoch, std::span<const std::size_t> rows) const;

 private:
  std::map<int, std::map<std::size_t, double>> by_epoch_;
};

class ExternalSelector final : public ScoredSelector {
 public:
  ExternalSelector(std::vector<std::size_t> dataset_rows, std::shared_ptr<const ExternalScores> scores,
                   const SelectorConfig& config);

  std::string_view name() const override { return "external"; }

 protected:
  std::optional<Vector> epoch_weights(int epoch) override;

 private:
  std::vector<std::size_t> rows_;
  std::shared_ptr<const ExternalScores> scores_;
};

inline constexpr std::string_view kSelectorNames[] = {"ours", "random", "balance", "active",
                                                      "recency", "external"};

/// Builds a selector by name for a training set with the given labels.
/// `dataset_rows` maps local indices to dataset rows (needed by
/// "external").
std::unique_ptr<BatchSelector> make_selector(std::string_view name, const SelectorConfig& config,
                                             const Matrix& train_labels,
                                             std::span<const std::size_t> dataset_rows = {},
                                             std::shared_ptr<const ExternalScores> external = nullptr);

}  // namespace mlbatch
