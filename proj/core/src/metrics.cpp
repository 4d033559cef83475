// SPDX-License-Identifier: Apache-2.0
#include "mlbatch/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mlbatch/error.hpp"

namespace mlbatch {

namespace {

void check_shapes(const Matrix& scores, const Matrix& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols())
    throw DimensionError(fmt::format("scores are {}x{}, labels are {}x{}", scores.rows(),
                                     scores.cols(), labels.rows(), labels.cols()));
}

}  // namespace

double label_auc(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const Vector>& labels) {
  const auto n = static_cast<std::size_t>(scores.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] < scores[static_cast<Eigen::Index>(b)];
  });
  // Sum of positive ranks, doubled so tied-group averages stay integral.
  double rank_sum2 = 0.0;
  std::size_t pos = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && scores[static_cast<Eigen::Index>(order[end])] ==
                          scores[static_cast<Eigen::Index>(order[start])])
      ++end;
    const double avg_rank2 = static_cast<double>(start + 1 + end);  // 2 * mean of ranks start+1..end
    for (std::size_t k = start; k < end; ++k) {
      if (labels[static_cast<Eigen::Index>(order[k])] > 0.5) {
        rank_sum2 += avg_rank2;
        ++pos;
      }
    }
    start = end;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double p = static_cast<double>(pos);
  const double u = 0.5 * rank_sum2 - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

double macro_auc(const Matrix& scores, const Matrix& labels, EvaluationReport* detail) {
  check_shapes(scores, labels);
  std::vector<double> per_label(static_cast<std::size_t>(scores.cols()));
  double total = 0.0;
  std::size_t used = 0;
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    const double auc = label_auc(scores.col(j), labels.col(j));
    per_label[static_cast<std::size_t>(j)] = auc;
    if (!std::isnan(auc)) {
      total += auc;
      ++used;
    }
  }
  if (detail) {
    detail->label_auc = per_label;
    detail->skipped_labels = per_label.size() - used;
  }
  if (used == 0) throw PreconditionError("macro AUC undefined: no label has both classes");
  return total / static_cast<double>(used);
}

double ranking_loss(const Matrix& scores, const Matrix& labels, EvaluationReport* detail) {
  check_shapes(scores, labels);
  const Eigen::Index q = scores.cols();
  std::vector<double> rel, irr;
  double total = 0.0;
  std::size_t eligible = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    rel.clear();
    irr.clear();
    for (Eigen::Index j = 0; j < q; ++j) (labels(i, j) > 0.5 ? rel : irr).push_back(scores(i, j));
    if (rel.empty() || irr.empty()) continue;
    // Count pairs with irrelevant >= relevant by merging sorted lists.
    std::sort(rel.begin(), rel.end());
    std::sort(irr.begin(), irr.end());
    std::size_t bad = 0;
    std::size_t k = 0;  // irrelevant scores strictly below the current relevant one
    for (double r : rel) {
      while (k < irr.size() && irr[k] < r) ++k;
      bad += irr.size() - k;
    }
    total += static_cast<double>(bad) / static_cast<double>(rel.size() * irr.size());
    ++eligible;
  }
  if (detail) detail->skipped_instances = static_cast<std::size_t>(scores.rows()) - eligible;
  if (eligible == 0)
    throw PreconditionError("ranking loss undefined: no instance has both relevant and irrelevant labels");
  return total / static_cast<double>(eligible);
}

double hamming_loss(const Matrix& scores, const Matrix& labels, double threshold) {
  check_shapes(scores, labels);
  if (scores.size() == 0) throw DimensionError("hamming loss of an empty matrix");
  std::size_t wrong = 0;
  for (Eigen::Index j = 0; j < scores.cols(); ++j)
    for (Eigen::Index i = 0; i < scores.rows(); ++i)
      wrong += (scores(i, j) >= threshold) != (labels(i, j) > 0.5) ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(scores.size());
}

EvaluationReport evaluate(const Matrix& scores, const Matrix& labels) {
  EvaluationReport r;
  r.macro_auc = macro_auc(scores, labels, &r);
  r.ranking_loss = ranking_loss(scores, labels, &r);
  r.hamming_loss = hamming_loss(scores, labels);
  return r;
}

}  // namespace mlbatch
