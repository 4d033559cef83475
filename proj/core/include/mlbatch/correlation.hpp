// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mlbatch/model.hpp"

namespace mlbatch {

/// min(floor(u * bins), bins - 1) for each entry; entries must lie in [0, 1].
std::vector<int> bin_column(std::span<const double> column, int bins);

/// Empirical joint distribution of two bin-index vectors and its marginals.
struct JointDistribution {
  int bins = 0;
  std::vector<double> joint;     ///< bins x bins, row = first vector's bin
  std::vector<double> marginal_a;
  std::vector<double> marginal_b;

  double at(int a, int b) const { return joint[static_cast<std::size_t>(a) * bins + b]; }
};

JointDistribution joint_marginal(std::span<const int> bins_a, std::span<const int> bins_b,
                                 int bins);

/// Histogram mutual information in bits between two uncertainty columns
/// binned into `bins` equal-width cells on [0, 1]. Never negative.
double mutual_information(std::span<const double> col_a, std::span<const double> col_b,
                          int bins);

/// Mutual information from already-binned columns.
double mutual_information_binned(std::span<const int> bins_a, std::span<const int> bins_b,
                                 int bins);

/// q x q matrix of pairwise mutual information between the columns of an
/// n x q uncertainty matrix; unit diagonal, symmetric.
Matrix correlation_matrix(const Matrix& uncertainty, int bins);

/// U * C.
Matrix weighted_uncertainty(const Matrix& uncertainty, const Matrix& correlation);

/// Row sums of the re-weighted uncertainty matrix, min-max normalized to
/// [0, 1]. When every row sum is equal, every weight is 0.5.
Vector sample_weights(const Matrix& weighted);

/// Min-max normalization with the same 0.5 tie rule; shared by the
/// baseline selectors that score samples directly.
Vector min_max_normalize(const Vector& raw);

}  // namespace mlbatch
