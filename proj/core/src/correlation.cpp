// SPDX-License-Identifier: Apache-2.0
#include "mlbatch/correlation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "mlbatch/error.hpp"

namespace mlbatch {

namespace {

void check_bins(int bins) {
  if (bins < 2) throw DomainError(fmt::format("bin count {} must be at least 2", bins));
}

// Mutual information from an integer co-occurrence table. Terms are summed
// in sorted order so swapping the two columns gives the identical double.
double mi_from_counts(std::span<const std::size_t> joint, std::span<const std::size_t> ca,
                      std::span<const std::size_t> cb, int bins, std::size_t n) {
  const auto total = static_cast<double>(n);
  std::vector<double> terms;
  for (int a = 0; a < bins; ++a) {
    if (ca[a] == 0) continue;
    for (int b = 0; b < bins; ++b) {
      const std::size_t c = joint[static_cast<std::size_t>(a) * bins + b];
      if (c == 0) continue;
      const double pab = static_cast<double>(c) / total;
      const double pa = static_cast<double>(ca[a]) / total;
      const double pb = static_cast<double>(cb[b]) / total;
      terms.push_back(pab * std::log2(pab / (pa * pb)));
    }
  }
  std::sort(terms.begin(), terms.end());
  double mi = 0.0;
  for (double t : terms) mi += t;
  return std::max(mi, 0.0);
}

}  // namespace

std::vector<int> bin_column(std::span<const double> column, int bins) {
  check_bins(bins);
  std::vector<int> out(column.size());
  for (std::size_t i = 0; i < column.size(); ++i) {
    const double u = column[i];
    if (!(u >= 0.0 && u <= 1.0))
      throw DomainError(fmt::format("uncertainty {} at row {} is outside [0, 1]", u, i));
    out[i] = std::min(static_cast<int>(std::floor(u * bins)), bins - 1);
  }
  return out;
}

JointDistribution joint_marginal(std::span<const int> bins_a, std::span<const int> bins_b,
                                 int bins) {
  check_bins(bins);
  if (bins_a.size() != bins_b.size())
    throw DimensionError(
        fmt::format("bin vectors have lengths {} and {}", bins_a.size(), bins_b.size()));
  if (bins_a.empty()) throw DimensionError("bin vectors are empty");
  const std::size_t n = bins_a.size();
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins) * bins, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (bins_a[i] < 0 || bins_a[i] >= bins || bins_b[i] < 0 || bins_b[i] >= bins)
      throw DomainError(fmt::format("bin index out of range at row {}", i));
    ++counts[static_cast<std::size_t>(bins_a[i]) * bins + bins_b[i]];
  }
  JointDistribution out{bins, std::vector<double>(counts.size()), std::vector<double>(bins, 0.0),
                        std::vector<double>(bins, 0.0)};
  const auto total = static_cast<double>(n);
  for (int a = 0; a < bins; ++a) {
    std::size_t row = 0;
    for (int b = 0; b < bins; ++b) row += counts[static_cast<std::size_t>(a) * bins + b];
    out.marginal_a[a] = static_cast<double>(row) / total;
  }
  for (int b = 0; b < bins; ++b) {
    std::size_t col = 0;
    for (int a = 0; a < bins; ++a) col += counts[static_cast<std::size_t>(a) * bins + b];
    out.marginal_b[b] = static_cast<double>(col) / total;
  }
  for (std::size_t k = 0; k < counts.size(); ++k)
    out.joint[k] = static_cast<double>(counts[k]) / total;
  return out;
}

double mutual_information_binned(std::span<const int> bins_a, std::span<const int> bins_b,
                                 int bins) {
  check_bins(bins);
  if (bins_a.size() != bins_b.size())
    throw DimensionError(
        fmt::format("bin vectors have lengths {} and {}", bins_a.size(), bins_b.size()));
  if (bins_a.empty()) throw DimensionError("bin vectors are empty");
  const auto nb = static_cast<std::size_t>(bins);
  std::vector<std::size_t> joint(nb * nb, 0), ca(nb, 0), cb(nb, 0);
  for (std::size_t i = 0; i < bins_a.size(); ++i) {
    ++joint[static_cast<std::size_t>(bins_a[i]) * nb + bins_b[i]];
    ++ca[bins_a[i]];
    ++cb[bins_b[i]];
  }
  return mi_from_counts(joint, ca, cb, bins, bins_a.size());
}

double mutual_information(std::span<const double> col_a, std::span<const double> col_b,
                          int bins) {
  if (col_a.size() != col_b.size())
    throw DimensionError(fmt::format("columns have lengths {} and {}", col_a.size(), col_b.size()));
  const auto a = bin_column(col_a, bins);
  const auto b = bin_column(col_b, bins);
  return mutual_information_binned(a, b, bins);
}

Matrix correlation_matrix(const Matrix& uncertainty, int bins) {
  check_bins(bins);
  const auto n = static_cast<std::size_t>(uncertainty.rows());
  const auto q = static_cast<std::size_t>(uncertainty.cols());
  if (n < 2) throw PreconditionError("correlation_matrix needs at least two instances");

  // Column-major storage: column j is contiguous.
  std::vector<std::vector<int>> binned(q);
  for (std::size_t j = 0; j < q; ++j)
    binned[j] = bin_column({uncertainty.col(static_cast<Eigen::Index>(j)).data(), n}, bins);

  const auto nb = static_cast<std::size_t>(bins);
  std::vector<std::vector<std::size_t>> marg(q, std::vector<std::size_t>(nb, 0));
  for (std::size_t j = 0; j < q; ++j)
    for (int b : binned[j]) ++marg[j][b];

  Matrix c = Matrix::Identity(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
  std::vector<std::size_t> joint(nb * nb);
  for (std::size_t a = 0; a < q; ++a) {
    for (std::size_t b = a + 1; b < q; ++b) {
      std::fill(joint.begin(), joint.end(), 0);
      const int* ba = binned[a].data();
      const int* bb = binned[b].data();
      for (std::size_t i = 0; i < n; ++i) ++joint[static_cast<std::size_t>(ba[i]) * nb + bb[i]];
      const double mi = mi_from_counts(joint, marg[a], marg[b], bins, n);
      c(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = mi;
      c(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = mi;
    }
  }
  return c;
}

Matrix weighted_uncertainty(const Matrix& uncertainty, const Matrix& correlation) {
  if (uncertainty.cols() != correlation.rows() || correlation.rows() != correlation.cols())
    throw DimensionError(fmt::format("cannot multiply {}x{} uncertainty by {}x{} correlation",
                                     uncertainty.rows(), uncertainty.cols(), correlation.rows(),
                                     correlation.cols()));
  return uncertainty * correlation;
}

Vector min_max_normalize(const Vector& raw) {
  if (raw.size() == 0) throw DimensionError("cannot normalize an empty weight vector");
  if (!raw.allFinite()) throw NumericError("non-finite sample weight");
  const double lo = raw.minCoeff();
  const double hi = raw.maxCoeff();
  if (hi == lo) return Vector::Constant(raw.size(), 0.5);
  Vector w = (raw.array() - lo) / (hi - lo);
  return w.cwiseMax(0.0).cwiseMin(1.0);
}

Vector sample_weights(const Matrix& weighted) {
  if (weighted.rows() == 0) throw DimensionError("sample_weights needs at least one row");
  if (!weighted.allFinite()) throw NumericError("non-finite entry in weighted uncertainty");
  return min_max_normalize(weighted.rowwise().sum());
}

}  // namespace mlbatch
