// SPDX-License-Identifier: Apache-2.0
#include "mlbatch/sampler.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "mlbatch/error.hpp"

namespace mlbatch {

std::size_t quantize(double weight, std::size_t n) {
  if (!(weight >= 0.0 && weight <= 1.0))
    throw DomainError(fmt::format("weight {} is outside [0, 1]", weight));
  if (n == 0) throw DomainError("quantize needs n >= 1");
  const double idx = std::floor((1.0 - weight) * static_cast<double>(n));
  return std::min(static_cast<std::size_t>(std::max(idx, 0.0)), n);
}

Vector selection_probabilities(const Vector& weights, double pressure) {
  if (!(pressure >= 1.0)) throw DomainError(fmt::format("pressure {} must be >= 1", pressure));
  const auto n = static_cast<std::size_t>(weights.size());
  if (n == 0) throw DimensionError("selection_probabilities needs at least one weight");
  // Work in log space relative to the smallest index so that the largest
  // term is exactly 1.
  std::vector<std::size_t> q(n);
  std::size_t q_min = n;
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = quantize(weights[static_cast<Eigen::Index>(i)], n);
    q_min = std::min(q_min, q[i]);
  }
  const double step = std::log(pressure) / static_cast<double>(n);
  Vector p(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    p[static_cast<Eigen::Index>(i)] = std::exp(-step * static_cast<double>(q[i] - q_min));
  return p / p.sum();
}

double PressureSchedule::at(double t) const {
  if (!(t_end > t_start))
    throw DomainError(fmt::format("pressure schedule needs t_start < t_end, got [{}, {}]", t_start, t_end));
  if (!(initial >= 1.0)) throw DomainError(fmt::format("initial pressure {} must be >= 1", initial));
  if (t < t_start || t > t_end) {
    spdlog::warn("pressure requested at t={} outside [{}, {}]; clamping", t, t_start, t_end);
    t = std::clamp(t, t_start, t_end);
  }
  if (t == t_end) return 1.0;
  return std::pow(initial, 1.0 - (t - t_start) / (t_end - t_start));
}

WeightedSampler::WeightedSampler(std::span<const double> weights)
    : size_(weights.size()), weights_(weights.begin(), weights.end()) {
  leaves_ = 1;
  while (leaves_ < size_) leaves_ *= 2;
  tree_.assign(2 * leaves_, 0.0);
  for (std::size_t i = 0; i < size_; ++i) {
    if (!(weights_[i] > 0.0) || !std::isfinite(weights_[i]))
      throw DomainError(fmt::format("sampling weight {} at {} must be positive and finite", weights_[i], i));
    tree_[leaves_ + i] = weights_[i];
  }
  for (std::size_t k = leaves_; k-- > 1;) tree_[k] = tree_[2 * k] + tree_[2 * k + 1];
}

void WeightedSampler::set_leaf(std::size_t i, double w) {
  std::size_t k = leaves_ + i;
  tree_[k] = w;
  // Recompute from children rather than adding a delta, so removed mass
  // never leaves a residue behind.
  for (k /= 2; k >= 1; k /= 2) tree_[k] = tree_[2 * k] + tree_[2 * k + 1];
}

std::vector<std::size_t> WeightedSampler::draw(std::size_t count, Rng& rng) {
  if (count > size_)
    throw DomainError(fmt::format("cannot draw {} distinct indices from {}", count, size_));
  std::vector<std::size_t> out;
  out.reserve(count);
  for (std::size_t d = 0; d < count; ++d) {
    double r = rng.uniform() * tree_[1];
    std::size_t k = 1;
    while (k < leaves_) {
      const double left = tree_[2 * k];
      // Never descend into an empty subtree, whatever rounding does to r.
      if ((r < left && left > 0.0) || tree_[2 * k + 1] <= 0.0) {
        k = 2 * k;
      } else {
        r -= left;
        k = 2 * k + 1;
      }
    }
    const std::size_t i = k - leaves_;
    out.push_back(i);
    set_leaf(i, 0.0);
  }
  for (std::size_t i : out) set_leaf(i, weights_[i]);
  return out;
}

std::vector<std::size_t> draw_batch(const Vector& probs, std::size_t batch, Rng& rng) {
  if (batch > static_cast<std::size_t>(probs.size()))
    throw DomainError(fmt::format("batch size {} exceeds {} instances", batch, probs.size()));
  WeightedSampler sampler({probs.data(), static_cast<std::size_t>(probs.size())});
  return sampler.draw(batch, rng);
}

}  // namespace mlbatch
