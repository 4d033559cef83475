// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mlbatch {

/// Welford accumulator over every value ever pushed.
struct RunningStats {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  /// Divides by count. Zero for fewer than one value.
  double population_variance() const { return count ? m2 / static_cast<double>(count) : 0.0; }
};

/// Last-T predicted probabilities for one (instance, label) pair, plus an
/// unbounded accumulator over the full history.
class PredictionHistory {
 public:
  explicit PredictionHistory(std::size_t window);
  /// Copies always own their storage.
  PredictionHistory(const PredictionHistory& other);
  PredictionHistory& operator=(const PredictionHistory& other);
  PredictionHistory(PredictionHistory&& other) noexcept;
  PredictionHistory& operator=(PredictionHistory&& other) noexcept;

  /// Appends p in [0, 1], evicting the oldest entry once the window is full.
  void push(double p);

  std::size_t window() const noexcept { return window_; }
  std::size_t size() const noexcept { return fill_; }
  bool full() const noexcept { return fill_ == window_; }

  /// k-th stored value, 0 = oldest.
  double operator[](std::size_t k) const { return ring_[(start() + k) % window_]; }
  double newest() const { return (*this)[fill_ - 1]; }

  /// Sum of |x[k] - x[k-1]| over the stored values, oldest to newest.
  double sum_abs_steps() const noexcept;

  const RunningStats& lifetime() const noexcept { return lifetime_; }

 private:
  friend class HistoryStore;
  PredictionHistory(double* storage, std::size_t window) noexcept : ring_(storage), window_(window) {}

  std::size_t start() const noexcept { return full() ? head_ : 0; }

  std::vector<double> owned_;
  double* ring_ = nullptr;  // owned_.data() or a slice of a HistoryStore
  std::size_t window_ = 0;
  std::size_t head_ = 0;  // next write slot
  std::size_t fill_ = 0;
  RunningStats lifetime_;
};

/// Row-major n x q grid of histories sharing one contiguous buffer.
/// Move-only.
class HistoryStore {
 public:
  HistoryStore() = default;
  HistoryStore(std::size_t instances, std::size_t labels, std::size_t window);
  HistoryStore(const HistoryStore&) = delete;
  HistoryStore& operator=(const HistoryStore&) = delete;
  HistoryStore(HistoryStore&&) noexcept = default;
  HistoryStore& operator=(HistoryStore&&) noexcept = default;

  PredictionHistory& at(std::size_t instance, std::size_t label) {
    return cells_[instance * labels_ + label];
  }
  const PredictionHistory& at(std::size_t instance, std::size_t label) const {
    return cells_[instance * labels_ + label];
  }

  std::size_t instances() const noexcept { return instances_; }
  std::size_t labels() const noexcept { return labels_; }
  std::size_t window() const noexcept { return window_; }

  bool all_full() const;
  /// Smallest fill count over all pairs.
  std::size_t min_fill() const;

 private:
  std::size_t instances_ = 0;
  std::size_t labels_ = 0;
  std::size_t window_ = 0;
  std::vector<double> values_;
  std::vector<PredictionHistory> cells_;
};

/// Binary entropy in bits, with 0 log 0 = 0. Throws DomainError outside [0, 1].
double current_entropy(double p);

/// Mean absolute difference of adjacent window entries. Requires a full
/// window of size >= 2.
double window_abs_diff(const PredictionHistory& h);

/// lambda * d + (1 - lambda) * e, all arguments in [0, 1].
double combined_uncertainty(double d, double e, double lambda);

/// sqrt(var + var^2 / (count - 1)) with population variance over the full
/// lifetime history. Requires at least two recorded values.
double history_std(const PredictionHistory& h);

/// Same statistic restricted to the current window. Requires a full window
/// of size >= 2.
double window_std(const PredictionHistory& h);

/// Entropy in bits of the window's binarized predictions (p >= 0.5 -> 1).
/// Requires a full window.
double window_binary_entropy(const PredictionHistory& h);

inline void push_prediction(PredictionHistory& h, double p) { h.push(p); }

}  // namespace mlbatch
