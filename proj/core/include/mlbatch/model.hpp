// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mlbatch/rng.hpp"

namespace mlbatch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Parameters of a fully connected network: rectifier hidden layers and
/// logistic sigmoid outputs. Stored as one flat vector so optimizer state
/// and gradients share a layout; per-layer views are Eigen maps into it.
///
/// Layer l maps widths[l] inputs to widths[l+1] outputs with a weight
/// matrix of shape (in, out) and a bias of length out.
class MlpParams {
 public:
  MlpParams() = default;

  /// All-zero parameters for the given architecture (inputs, hidden..., outputs).
  static MlpParams zeros(std::vector<int> widths);

  /// Uniform Glorot initialization, +/- sqrt(6 / (fan_in + fan_out)); zero biases.
  static MlpParams glorot(std::vector<int> widths, Rng& rng);

  const std::vector<int>& widths() const noexcept { return widths_; }
  std::size_t layer_count() const noexcept { return widths_.empty() ? 0 : widths_.size() - 1; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }

  Eigen::Map<Matrix> weight(std::size_t layer);
  Eigen::Map<const Matrix> weight(std::size_t layer) const;
  Eigen::Map<Vector> bias(std::size_t layer);
  Eigen::Map<const Vector> bias(std::size_t layer) const;

  Vector& values() noexcept { return values_; }
  const Vector& values() const noexcept { return values_; }

  bool same_shape(const MlpParams& other) const { return widths_ == other.widths_; }
  bool all_finite() const { return values_.allFinite(); }

 private:
  explicit MlpParams(std::vector<int> widths);

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const;

  std::vector<int> widths_;
  std::vector<std::size_t> offsets_;
  Vector values_;
};

/// Probabilities for each row of `inputs` (rows x outputs). Outputs are kept
/// strictly inside (0, 1) even when a logit saturates in double precision.
Matrix forward(const MlpParams& params, const Matrix& inputs);

/// Mean binary cross-entropy over all entries, probabilities clamped to
/// [1e-12, 1 - 1e-12].
double bce_loss(const Matrix& probs, const Matrix& labels);

inline constexpr double kLossClamp = 1e-12;

struct LossGradient {
  double loss = 0.0;  ///< bce_loss + 0.5 * l2 * ||theta||^2
  MlpParams grad;
  Matrix probs;  ///< forward output the gradient was taken at
};

/// Analytic gradient of the mean BCE objective with optional L2 penalty
/// 0.5 * l2 * ||theta||^2 over every parameter.
LossGradient backward(const MlpParams& params, const Matrix& inputs, const Matrix& labels,
                      double l2 = 0.0);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Coupled L2 decay: weight_decay * theta is added to the gradient.
  double weight_decay = 1e-4;
};

struct AdamState {
  AdamConfig config;
  Vector m;
  Vector v;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(const MlpParams& params, AdamConfig cfg);

  /// Bias-corrected moment estimates of the most recent step.
  Vector corrected_first_moment() const;
  Vector corrected_second_moment() const;
};

/// One Adam update. Throws NumericError (and leaves params untouched)
/// when the gradient has non-finite entries.
void adam_step(AdamState& state, MlpParams& params, const MlpParams& grad);

/// Text snapshot: a header line with the widths, then per layer the weight
/// matrix in row-major order and the bias, all as %.17g doubles.
void save_params(std::ostream& out, const MlpParams& params);
MlpParams load_params(std::istream& in);

}  // namespace mlbatch
