// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mlbatch/model.hpp"
#include "mlbatch/rng.hpp"

namespace mlbatch {

/// Dense features (n x d) and binary labels (n x q).
struct MultiLabelDataset {
  Matrix features;
  Matrix labels;
  std::vector<std::string> label_names;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }
  std::size_t label_count() const { return static_cast<std::size_t>(labels.cols()); }

  /// Rows picked by index, in the given order.
  MultiLabelDataset subset(std::span<const std::size_t> rows) const;
};

/// Reads the native text format:
///
///     #MLL n=<n> d=<d> q=<q>
///     #labels name1,name2,...        (optional)
///     f1,...,fd|y1,...,yq            (n lines)
///
/// Blank lines are ignored. Errors are ParseError with a line number.
MultiLabelDataset read_mll(std::istream& in);
MultiLabelDataset load_dataset(const std::filesystem::path& path);

void write_mll(std::ostream& out, const MultiLabelDataset& ds);
void save_dataset(const std::filesystem::path& path, const MultiLabelDataset& ds);

/// Per-feature min-max statistics fitted on training rows.
struct MinMaxScaler {
  Vector low;
  Vector range;  ///< zero for constant features

  static MinMaxScaler fit(const Matrix& features, std::span<const std::size_t> rows);
  /// Scales in place; constant features map to 0. Rows outside the fitting
  /// set may leave [0, 1].
  void transform(Matrix& features) const;
};

/// Fits on train_rows and scales every row of a copy of the dataset.
MultiLabelDataset scale_features(const MultiLabelDataset& ds,
                                 std::span<const std::size_t> train_rows);

/// k disjoint folds that partition 0..n-1.
struct FoldPlan {
  std::vector<std::vector<std::size_t>> folds;

  struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
  };

  std::size_t k() const { return folds.size(); }

  /// Round r: fold r is the test set, fold (r + 1) mod k validates, the
  /// rest train. Needs k >= 3. Index lists are sorted.
  Split split(std::size_t round) const;
};

/// First-order iterative stratification over instances visited in
/// `order`. Deterministic; exposed for exhaustive tests.
FoldPlan stratified_kfold_ordered(const Matrix& labels, std::size_t k,
                                  std::span<const std::size_t> order);

/// Iterative stratification with the instance order shuffled by rng.
FoldPlan stratified_kfold(const Matrix& labels, std::size_t k, Rng& rng);

/// Synthetic multi-label data: labels are thresholded linear functions of
/// a shared low-rank latent, so labels are correlated and learnable.
MultiLabelDataset make_synthetic(std::size_t n, std::size_t d, std::size_t q, Rng& rng,
                                 double label_noise = 0.05);

}  // namespace mlbatch
