// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "mlbatch/model.hpp"

namespace mlbatch {

struct EvaluationReport {
  double macro_auc = 0.0;
  double ranking_loss = 0.0;
  double hamming_loss = 0.0;
  std::vector<double> label_auc;  ///< NaN for skipped labels
  std::size_t skipped_labels = 0;     ///< no positives or no negatives
  std::size_t skipped_instances = 0;  ///< all-relevant or all-irrelevant rows
};

/// AUC of one score column against binary labels, via the rank-sum
/// statistic with average ranks for ties (a tie counts one half). NaN when
/// the column lacks positives or negatives.
double label_auc(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const Vector>& labels);

/// Mean per-label AUC over labels with both classes present. Throws
/// PreconditionError when every label is degenerate.
double macro_auc(const Matrix& scores, const Matrix& labels, EvaluationReport* detail = nullptr);

/// Mean over eligible instances of the fraction of (relevant, irrelevant)
/// pairs with score(irrelevant) >= score(relevant).
double ranking_loss(const Matrix& scores, const Matrix& labels, EvaluationReport* detail = nullptr);

/// Fraction of entries where (score >= threshold) disagrees with the label.
double hamming_loss(const Matrix& scores, const Matrix& labels, double threshold = 0.5);

EvaluationReport evaluate(const Matrix& scores, const Matrix& labels);

}  // namespace mlbatch
