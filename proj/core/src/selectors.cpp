// SPDX-License-Identifier: Apache-2.0
#include "mlbatch/selectors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "mlbatch/correlation.hpp"
#include "mlbatch/error.hpp"

namespace mlbatch {

namespace {

void check_forward(std::span<const std::size_t> indices, const Matrix& probs, std::size_t n,
                   std::size_t q) {
  if (static_cast<std::size_t>(probs.rows()) != indices.size() ||
      static_cast<std::size_t>(probs.cols()) != q)
    throw DimensionError(fmt::format("forward probabilities are {}x{}, expected {}x{}",
                                     probs.rows(), probs.cols(), indices.size(), q));
  for (std::size_t i : indices)
    if (i >= n) throw DomainError(fmt::format("instance index {} out of range [0, {})", i, n));
}

void push_all(HistoryStore& store, std::span<const std::size_t> indices, const Matrix& probs) {
  for (std::size_t r = 0; r < indices.size(); ++r)
    for (std::size_t j = 0; j < store.labels(); ++j)
      store.at(indices[r], j).push(probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)));
}

}  // namespace

BatchSelector::BatchSelector(std::size_t instances, std::size_t batch_size)
    : instances_(instances), batch_size_(batch_size) {
  if (batch_size == 0) throw DomainError("batch size must be positive");
  if (batch_size > instances)
    throw DomainError(fmt::format("batch size {} exceeds {} training instances", batch_size, instances));
}

void BatchSelector::on_batch_forward(std::span<const std::size_t>, const Matrix&) {}

ShuffledChunks::ShuffledChunks(std::size_t instances, std::size_t batch_size)
    : order_(instances), batch_size_(batch_size) {
  std::iota(order_.begin(), order_.end(), 0);
}

void ShuffledChunks::reshuffle(Rng& rng) {
  std::iota(order_.begin(), order_.end(), 0);
  rng.shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

std::vector<std::size_t> ShuffledChunks::next() {
  if (cursor_ + batch_size_ > order_.size())
    throw PreconditionError("epoch exhausted: no full batch left");
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
  cursor_ += batch_size_;
  return out;
}

RandomSelector::RandomSelector(std::size_t instances, std::size_t batch_size)
    : BatchSelector(instances, batch_size), chunks_(instances, batch_size) {}

void RandomSelector::on_epoch_start(int, Rng& rng) { chunks_.reshuffle(rng); }

std::vector<std::size_t> RandomSelector::next_batch(Rng&) { return chunks_.next(); }

std::vector<std::vector<std::size_t>> balance_assign(const Matrix& labels,
                                                     std::span<const std::size_t> order,
                                                     std::size_t batch_size) {
  const auto n = static_cast<std::size_t>(labels.rows());
  const auto q = static_cast<std::size_t>(labels.cols());
  if (batch_size == 0 || batch_size > n) throw DomainError("batch size must be in [1, n]");
  if (order.size() != n) throw DimensionError("visit order must list every instance once");
  const std::size_t m = n / batch_size;

  // Per-batch targets for the positive and the negative count of every
  // label; tracking negatives keeps unlabeled rows from crowding out a
  // batch that still needs positives.
  std::vector<double> target(2 * q);
  for (std::size_t j = 0; j < q; ++j) {
    const double pos = labels.col(static_cast<Eigen::Index>(j)).sum();
    target[2 * j] = static_cast<double>(batch_size) * pos / static_cast<double>(n);
    target[2 * j + 1] = static_cast<double>(batch_size) * (static_cast<double>(n) - pos) / static_cast<double>(n);
  }
  auto slot = [&](std::size_t i, std::size_t j) {
    return 2 * j + (labels(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.5 ? 0 : 1);
  };

  std::vector<std::vector<std::size_t>> batches(m);
  std::vector<std::vector<double>> counts(m, std::vector<double>(2 * q, 0.0));
  std::size_t held = 0;
  const std::size_t spare = n - m * batch_size;
  for (std::size_t i : order) {
    std::size_t best = m;
    double best_delta = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
      if (batches[k].size() == batch_size) continue;
      double delta = 0.0;
      for (std::size_t j = 0; j < q; ++j) {
        const auto s = slot(i, j);
        delta += std::abs(counts[k][s] + 1.0 - target[s]) - std::abs(counts[k][s] - target[s]);
      }
      if (delta < best_delta) {
        best_delta = delta;
        best = k;
      }
    }
    if (best == m) continue;  // every batch is full; i falls in the remainder
    if (best_delta > 0.0 && held < spare) {
      ++held;
      continue;
    }
    batches[best].push_back(i);
    for (std::size_t j = 0; j < q; ++j) counts[best][slot(i, j)] += 1.0;
  }
  return batches;
}

BalanceSelector::BalanceSelector(Matrix labels, std::size_t batch_size)
    : BatchSelector(static_cast<std::size_t>(labels.rows()), batch_size), labels_(std::move(labels)) {}

void BalanceSelector::on_epoch_start(int, Rng& rng) {
  std::vector<std::size_t> order(instances());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  batches_ = balance_assign(labels_, order, batch_size());
  cursor_ = 0;
}

std::vector<std::size_t> BalanceSelector::next_batch(Rng&) {
  if (cursor_ >= batches_.size()) throw PreconditionError("epoch exhausted: no batch left");
  return batches_[cursor_++];
}

ScoredSelector::ScoredSelector(std::size_t instances, const SelectorConfig& config)
    : BatchSelector(instances, config.batch_size),
      config_(config),
      schedule_{config.initial_pressure, static_cast<double>(config.warmup),
                static_cast<double>(config.total_epochs)},
      chunks_(instances, config.batch_size) {
  if (config.warmup < 0) throw DomainError("warm-up must be non-negative");
  if (!(config.initial_pressure >= 1.0)) throw DomainError("initial pressure must be >= 1");
}

void ScoredSelector::on_epoch_start(int epoch, Rng& rng) {
  warming_up_ = epoch <= config_.warmup;
  pressure_ = 1.0;
  if (!warming_up_) {
    pressure_ = schedule_.at(static_cast<double>(epoch));
    if (auto w = epoch_weights(epoch)) {
      weights_ = std::move(*w);
      probs_ = selection_probabilities(weights_, pressure_);
      sampler_ = WeightedSampler({probs_.data(), static_cast<std::size_t>(probs_.size())});
      return;
    }
    warming_up_ = true;
    pressure_ = 1.0;
  }
  weights_.resize(0);
  probs_.resize(0);
  chunks_.reshuffle(rng);
}

std::vector<std::size_t> ScoredSelector::next_batch(Rng& rng) {
  if (warming_up_) return chunks_.next();
  return sampler_.draw(batch_size(), rng);
}

OursSelector::OursSelector(std::size_t instances, std::size_t labels, const SelectorConfig& config)
    : ScoredSelector(instances, config),
      histories_(instances, labels, config.window),
      uncertainty_(Matrix::Constant(static_cast<Eigen::Index>(instances),
                                    static_cast<Eigen::Index>(labels),
                                    std::numeric_limits<double>::quiet_NaN())),
      correlation_(Matrix::Identity(static_cast<Eigen::Index>(labels), static_cast<Eigen::Index>(labels))) {
  if (config.window < 2) throw DomainError("window size must be at least 2");
  if (!(config.lambda1 >= 0.0 && config.lambda1 <= 1.0)) throw DomainError("lambda1 must lie in [0, 1]");
  if (config.bins < 2) throw DomainError("bin count must be at least 2");
}

void OursSelector::on_batch_forward(std::span<const std::size_t> indices, const Matrix& probs) {
  check_forward(indices, probs, instances(), histories_.labels());
  const double lambda = config().lambda1;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto i = indices[r];
    for (std::size_t j = 0; j < histories_.labels(); ++j) {
      auto& h = histories_.at(i, j);
      const double p = probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
      h.push(p);
      if (h.full())
        uncertainty_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            combined_uncertainty(window_abs_diff(h), current_entropy(p), lambda);
    }
  }
}

std::optional<Vector> OursSelector::epoch_weights(int epoch) {
  if (!histories_.all_full())
    throw PreconditionError(fmt::format(
        "epoch {}: prediction windows not filled after warm-up (min fill {} of {})", epoch,
        histories_.min_fill(), histories_.window()));
  const auto q = uncertainty_.cols();
  correlation_ = config().identity_correlation ? Matrix::Identity(q, q)
                                               : correlation_matrix(uncertainty_, config().bins);
  return sample_weights(weighted_uncertainty(uncertainty_, correlation_));
}

ActiveBiasSelector::ActiveBiasSelector(std::size_t instances, std::size_t labels,
                                       const SelectorConfig& config)
    : ScoredSelector(instances, config), histories_(instances, labels, config.window) {}

void ActiveBiasSelector::on_batch_forward(std::span<const std::size_t> indices, const Matrix& probs) {
  check_forward(indices, probs, instances(), histories_.labels());
  push_all(histories_, indices, probs);
}

std::optional<Vector> ActiveBiasSelector::epoch_weights(int) {
  Vector raw(static_cast<Eigen::Index>(instances()));
  for (std::size_t i = 0; i < instances(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < histories_.labels(); ++j) s += history_std(histories_.at(i, j));
    raw[static_cast<Eigen::Index>(i)] = s;
  }
  return min_max_normalize(raw);
}

RecencyBiasSelector::RecencyBiasSelector(std::size_t instances, std::size_t labels,
                                         const SelectorConfig& config)
    : ScoredSelector(instances, config), histories_(instances, labels, config.window) {}

void RecencyBiasSelector::on_batch_forward(std::span<const std::size_t> indices, const Matrix& probs) {
  check_forward(indices, probs, instances(), histories_.labels());
  push_all(histories_, indices, probs);
}

std::optional<Vector> RecencyBiasSelector::epoch_weights(int) {
  Vector raw(static_cast<Eigen::Index>(instances()));
  for (std::size_t i = 0; i < instances(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < histories_.labels(); ++j) s += window_binary_entropy(histories_.at(i, j));
    raw[static_cast<Eigen::Index>(i)] = s;
  }
  return min_max_normalize(raw);
}

ExternalScores ExternalScores::parse(std::istream& in) {
  ExternalScores out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("epoch", 0) == 0) continue;
    std::stringstream ss(line);
    std::string e, i, s;
    if (!std::getline(ss, e, ',') || !std::getline(ss, i, ',') || !std::getline(ss, s))
      throw ParseError("expected 'epoch,instance,score'", lineno);
    try {
      std::size_t used = 0;
      const int epoch = std::stoi(e, &used);
      const auto row = static_cast<std::size_t>(std::stoull(i));
      const double score = std::stod(s);
      if (!std::isfinite(score)) throw ParseError("non-finite score", lineno);
      out.by_epoch_[epoch][row] = score;
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("malformed score row '" + line + "'", lineno);
    }
  }
  return out;
}

ExternalScores ExternalScores::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open score file '{}'", path.string()), 0);
  return parse(in);
}

std::optional<Vector> ExternalScores::lookup(int epoch, std::span<const std::size_t> rows) const {
  auto it = by_epoch_.upper_bound(epoch);
  if (it == by_epoch_.begin()) return std::nullopt;
  --it;
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto found = it->second.find(rows[k]);
    if (found == it->second.end())
      throw ParseError(fmt::format("score file has no entry for instance {} at epoch {}", rows[k], it->first), 0);
    out[static_cast<Eigen::Index>(k)] = found->second;
  }
  return out;
}

ExternalSelector::ExternalSelector(std::vector<std::size_t> dataset_rows,
                                   std::shared_ptr<const ExternalScores> scores,
                                   const SelectorConfig& config)
    : ScoredSelector(dataset_rows.size(), config), rows_(std::move(dataset_rows)), scores_(std::move(scores)) {
  if (!scores_) throw DomainError("external selector needs a score table");
}

std::optional<Vector> ExternalSelector::epoch_weights(int epoch) {
  auto raw = scores_->lookup(epoch, rows_);
  if (!raw) return std::nullopt;
  return min_max_normalize(*raw);
}

std::unique_ptr<BatchSelector> make_selector(std::string_view name, const SelectorConfig& config,
                                             const Matrix& train_labels,
                                             std::span<const std::size_t> dataset_rows,
                                             std::shared_ptr<const ExternalScores> external) {
  const auto n = static_cast<std::size_t>(train_labels.rows());
  const auto q = static_cast<std::size_t>(train_labels.cols());
  if (name == "random") return std::make_unique<RandomSelector>(n, config.batch_size);
  if (name == "balance") return std::make_unique<BalanceSelector>(train_labels, config.batch_size);
  if (name == "ours") return std::make_unique<OursSelector>(n, q, config);
  if (name == "active") return std::make_unique<ActiveBiasSelector>(n, q, config);
  if (name == "recency") return std::make_unique<RecencyBiasSelector>(n, q, config);
  if (name == "external") {
    if (dataset_rows.size() != n) throw DimensionError("external selector needs one dataset row per instance");
    return std::make_unique<ExternalSelector>(std::vector<std::size_t>(dataset_rows.begin(), dataset_rows.end()),
                                              std::move(external), config);
  }
  throw DomainError(fmt::format("unknown selector '{}'", name));
}

}  // namespace mlbatch
