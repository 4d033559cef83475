// SPDX-License-Identifier: Apache-2.0
#include "mlbatch/uncertainty.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <utility>

#include "mlbatch/error.hpp"

namespace mlbatch {

namespace {

void check_unit(double x, const char* what) {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError(fmt::format("{} = {} is outside [0, 1]", what, x));
}

void require_full(const PredictionHistory& h, std::size_t min_window, const char* op) {
  if (h.window() < min_window)
    throw PreconditionError(fmt::format("{} needs a window of at least {}", op, min_window));
  if (!h.full())
    throw PreconditionError(
        fmt::format("{} on a window holding {} of {} predictions", op, h.size(), h.window()));
}

double inflated_std(double var, double count) {
  return std::sqrt(var + var * var / (count - 1.0));
}

}  // namespace

PredictionHistory::PredictionHistory(std::size_t window) : owned_(window, 0.0), window_(window) {
  if (window == 0) throw DomainError("window size must be positive");
  ring_ = owned_.data();
}

PredictionHistory::PredictionHistory(const PredictionHistory& other)
    : owned_(other.ring_, other.ring_ + other.window_),
      ring_(owned_.data()),
      window_(other.window_),
      head_(other.head_),
      fill_(other.fill_),
      lifetime_(other.lifetime_) {}

PredictionHistory& PredictionHistory::operator=(const PredictionHistory& other) {
  if (this != &other) {
    owned_.assign(other.ring_, other.ring_ + other.window_);
    ring_ = owned_.data();
    window_ = other.window_;
    head_ = other.head_;
    fill_ = other.fill_;
    lifetime_ = other.lifetime_;
  }
  return *this;
}

void PredictionHistory::push(double p) {
  check_unit(p, "prediction");
  ring_[head_] = p;
  if (++head_ == window_) head_ = 0;
  if (fill_ < window_) ++fill_;
  lifetime_.push(p);
}

double PredictionHistory::sum_abs_steps() const noexcept {
  if (fill_ < 2) return 0.0;
  const std::size_t w = window_;
  std::size_t k = start();
  double prev = ring_[k];
  double total = 0.0;
  for (std::size_t step = 1; step < fill_; ++step) {
    if (++k == w) k = 0;
    total += std::abs(ring_[k] - prev);
    prev = ring_[k];
  }
  return total;
}

PredictionHistory::PredictionHistory(PredictionHistory&& other) noexcept
    : owned_(std::move(other.owned_)),
      ring_(other.ring_),
      window_(other.window_),
      head_(other.head_),
      fill_(other.fill_),
      lifetime_(other.lifetime_) {}

PredictionHistory& PredictionHistory::operator=(PredictionHistory&& other) noexcept {
  owned_ = std::move(other.owned_);
  ring_ = other.ring_;
  window_ = other.window_;
  head_ = other.head_;
  fill_ = other.fill_;
  lifetime_ = other.lifetime_;
  return *this;
}

HistoryStore::HistoryStore(std::size_t instances, std::size_t labels, std::size_t window)
    : instances_(instances),
      labels_(labels),
      window_(window) {
  if (window == 0) throw DomainError("window size must be positive");
  values_.assign(instances * labels * window, 0.0);
  cells_.reserve(instances * labels);
  for (std::size_t c = 0; c < instances * labels; ++c)
    cells_.push_back(PredictionHistory(values_.data() + c * window, window));
}

bool HistoryStore::all_full() const {
  return std::all_of(cells_.begin(), cells_.end(), [](const auto& h) { return h.full(); });
}

std::size_t HistoryStore::min_fill() const {
  std::size_t lo = window_;
  for (const auto& h : cells_) lo = std::min(lo, h.size());
  return lo;
}

double current_entropy(double p) {
  check_unit(p, "probability");
  double e = 0.0;
  if (p > 0.0) e -= p * std::log2(p);
  if (p < 1.0) e -= (1.0 - p) * std::log2(1.0 - p);
  return e;
}

double window_abs_diff(const PredictionHistory& h) {
  require_full(h, 2, "window_abs_diff");
  return h.sum_abs_steps() / static_cast<double>(h.size() - 1);
}

double combined_uncertainty(double d, double e, double lambda) {
  check_unit(d, "window fluctuation");
  check_unit(e, "entropy");
  check_unit(lambda, "lambda");
  return lambda * d + (1.0 - lambda) * e;
}

double history_std(const PredictionHistory& h) {
  const auto& s = h.lifetime();
  if (s.count < 2)
    throw PreconditionError(fmt::format("history_std needs 2 predictions, have {}", s.count));
  return inflated_std(s.population_variance(), static_cast<double>(s.count));
}

double window_std(const PredictionHistory& h) {
  require_full(h, 2, "window_std");
  RunningStats s;
  for (std::size_t k = 0; k < h.size(); ++k) s.push(h[k]);
  return inflated_std(s.population_variance(), static_cast<double>(s.count));
}

double window_binary_entropy(const PredictionHistory& h) {
  require_full(h, 1, "window_binary_entropy");
  std::size_t ones = 0;
  for (std::size_t k = 0; k < h.size(); ++k) ones += h[k] >= 0.5 ? 1 : 0;
  return current_entropy(static_cast<double>(ones) / static_cast<double>(h.size()));
}

}  // namespace mlbatch
