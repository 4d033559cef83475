// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mlbatch/model.hpp"
#include "mlbatch/rng.hpp"

namespace mlbatch {

/// floor((1 - w) * n): the most uncertain sample (w = 1) gets index 0,
/// the least uncertain (w = 0) gets n.
std::size_t quantize(double weight, std::size_t n);

/// P_i proportional to s^(-Q(w_i) / n), normalized. Every entry is
/// strictly positive and the vector sums to one.
Vector selection_probabilities(const Vector& weights, double pressure);

/// Exponential decay of the selection pressure from s0 at t_start to 1 at
/// t_end.
struct PressureSchedule {
  double initial = 100.0;
  double t_start = 0.0;
  double t_end = 1.0;

  /// s0^(1 - (t - t_start) / (t_end - t_start)); t is clamped into
  /// [t_start, t_end] with a logged warning.
  double at(double t) const;
};

inline double decay_pressure(const PressureSchedule& schedule, double t_now) {
  return schedule.at(t_now);
}

/// Weighted sampling without replacement.
///
/// Each draw picks index i with probability proportional to its weight
/// among the indices not yet drawn in the current batch. A sum tree keeps
/// each draw logarithmic; leaves are restored after every batch so the next
/// batch sees the full distribution again.
class WeightedSampler {
 public:
  WeightedSampler() = default;
  explicit WeightedSampler(std::span<const double> weights);

  std::size_t size() const noexcept { return size_; }

  std::vector<std::size_t> draw(std::size_t count, Rng& rng);

 private:
  void set_leaf(std::size_t i, double w);

  std::size_t size_ = 0;
  std::size_t leaves_ = 0;  // power of two >= size_
  std::vector<double> tree_;
  std::vector<double> weights_;
};

/// b distinct indices drawn from P without replacement.
std::vector<std::size_t> draw_batch(const Vector& probs, std::size_t batch, Rng& rng);

}  // namespace mlbatch
