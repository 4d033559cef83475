// SPDX-License-Identifier: Apache-2.0
#include "mlbatch/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "mlbatch/error.hpp"

namespace mlbatch {

namespace {

constexpr double kProbFloor = std::numeric_limits<double>::min();
constexpr double kProbCeil = 1.0 - 0x1.0p-53;

double sigmoid(double z) {
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(p, kProbFloor, kProbCeil);
}

void check_widths(const std::vector<int>& widths) {
  if (widths.size() < 2) throw DimensionError("network needs at least input and output widths");
  for (int w : widths)
    if (w <= 0) throw DimensionError("layer widths must be positive");
}

void check_inputs(const MlpParams& params, const Matrix& inputs) {
  if (inputs.cols() != params.input_dim())
    throw DimensionError(fmt::format("input has {} columns, network expects {}", inputs.cols(),
                                     params.input_dim()));
}

// Activations per layer; activations[0] is the input, the last is the sigmoid output.
std::vector<Matrix> forward_all(const MlpParams& params, const Matrix& inputs) {
  check_inputs(params, inputs);
  const std::size_t layers = params.layer_count();
  std::vector<Matrix> acts;
  acts.reserve(layers + 1);
  acts.push_back(inputs);
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = acts.back() * params.weight(l);
    z.rowwise() += params.bias(l).transpose();
    if (l + 1 < layers)
      z = z.cwiseMax(0.0);
    else
      z = z.unaryExpr(&sigmoid);
    acts.push_back(std::move(z));
  }
  return acts;
}

}  // namespace

MlpParams::MlpParams(std::vector<int> widths) : widths_(std::move(widths)) {
  check_widths(widths_);
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(offset);
    offset += static_cast<std::size_t>(widths_[l]) * widths_[l + 1] + widths_[l + 1];
  }
  values_ = Vector::Zero(static_cast<Eigen::Index>(offset));
}

MlpParams MlpParams::zeros(std::vector<int> widths) { return MlpParams(std::move(widths)); }

MlpParams MlpParams::glorot(std::vector<int> widths, Rng& rng) {
  MlpParams p(std::move(widths));
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    const double limit = std::sqrt(6.0 / (p.widths_[l] + p.widths_[l + 1]));
    auto w = p.weight(l);
    // Row-major fill so the draw order matches the snapshot layout.
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-limit, limit);
  }
  return p;
}

std::size_t MlpParams::bias_offset(std::size_t layer) const {
  return offsets_[layer] + static_cast<std::size_t>(widths_[layer]) * widths_[layer + 1];
}

Eigen::Map<Matrix> MlpParams::weight(std::size_t layer) {
  return {values_.data() + weight_offset(layer), widths_[layer], widths_[layer + 1]};
}

Eigen::Map<const Matrix> MlpParams::weight(std::size_t layer) const {
  return {values_.data() + weight_offset(layer), widths_[layer], widths_[layer + 1]};
}

Eigen::Map<Vector> MlpParams::bias(std::size_t layer) {
  return {values_.data() + bias_offset(layer), widths_[layer + 1]};
}

Eigen::Map<const Vector> MlpParams::bias(std::size_t layer) const {
  return {values_.data() + bias_offset(layer), widths_[layer + 1]};
}

Matrix forward(const MlpParams& params, const Matrix& inputs) {
  return std::move(forward_all(params, inputs).back());
}

double bce_loss(const Matrix& probs, const Matrix& labels) {
  if (probs.rows() != labels.rows() || probs.cols() != labels.cols())
    throw DimensionError(fmt::format("probabilities are {}x{}, labels are {}x{}", probs.rows(),
                                     probs.cols(), labels.rows(), labels.cols()));
  if (probs.size() == 0) throw DimensionError("empty batch");
  double total = 0.0;
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
      const double p = std::clamp(probs(r, c), kLossClamp, 1.0 - kLossClamp);
      const double y = labels(r, c);
      total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
  }
  return total / static_cast<double>(probs.size());
}

LossGradient backward(const MlpParams& params, const Matrix& inputs, const Matrix& labels,
                      double l2) {
  const auto acts = forward_all(params, inputs);
  const Matrix& probs = acts.back();
  if (labels.rows() != probs.rows() || labels.cols() != probs.cols())
    throw DimensionError(fmt::format("labels are {}x{}, expected {}x{}", labels.rows(),
                                     labels.cols(), probs.rows(), probs.cols()));

  LossGradient out{bce_loss(probs, labels), MlpParams::zeros(params.widths()), probs};
  if (l2 != 0.0) out.loss += 0.5 * l2 * params.values().squaredNorm();

  // Sigmoid + BCE: d loss / d logit = (p - y) / (rows * outputs).
  Matrix delta = (probs - labels) / static_cast<double>(probs.size());
  for (std::size_t l = params.layer_count(); l-- > 0;) {
    out.grad.weight(l).noalias() = acts[l].transpose() * delta;
    out.grad.bias(l) = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix upstream = delta * params.weight(l).transpose();
      delta = upstream.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
    }
  }
  if (l2 != 0.0) out.grad.values() += l2 * params.values();
  return out;
}

AdamState::AdamState(const MlpParams& params, AdamConfig cfg)
    : config(cfg),
      m(Vector::Zero(params.values().size())),
      v(Vector::Zero(params.values().size())) {}

Vector AdamState::corrected_first_moment() const {
  return m / (1.0 - std::pow(config.beta1, static_cast<double>(step)));
}

Vector AdamState::corrected_second_moment() const {
  return v / (1.0 - std::pow(config.beta2, static_cast<double>(step)));
}

void adam_step(AdamState& state, MlpParams& params, const MlpParams& grad) {
  if (!params.same_shape(grad) || state.m.size() != params.values().size())
    throw DimensionError("gradient or optimizer state does not match parameter layout");
  if (!grad.all_finite()) {
    Eigen::Index bad = 0;
    for (; bad < grad.values().size(); ++bad)
      if (!std::isfinite(grad.values()[bad])) break;
    throw NumericError(fmt::format("non-finite gradient at flat index {} (value {}) on step {}",
                                   bad, grad.values()[bad], state.step + 1));
  }
  const AdamConfig& c = state.config;
  Vector g = grad.values();
  if (c.weight_decay != 0.0) g += c.weight_decay * params.values();

  ++state.step;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * g;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * g.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  params.values().array() -=
      c.learning_rate * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + c.epsilon);
}

void save_params(std::ostream& out, const MlpParams& params) {
  std::string widths;
  for (std::size_t i = 0; i < params.widths().size(); ++i)
    widths += (i ? "," : "") + std::to_string(params.widths()[i]);
  out << "#MLP-PARAMS v1 widths=" << widths << '\n';
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    const auto w = params.weight(l);
    out << "W " << l << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) out << (c ? " " : "") << fmt::format("{:.17g}", w(r, c));
      out << '\n';
    }
    const auto b = params.bias(l);
    out << "b " << l << ' ' << b.size() << '\n';
    for (Eigen::Index i = 0; i < b.size(); ++i) out << (i ? " " : "") << fmt::format("{:.17g}", b[i]);
    out << '\n';
  }
}

MlpParams load_params(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("#MLP-PARAMS v1 widths=", 0) != 0)
    throw ParseError("missing '#MLP-PARAMS v1 widths=' header", 1);
  std::vector<int> widths;
  std::stringstream ws(header.substr(header.find('=') + 1));
  for (std::string tok; std::getline(ws, tok, ',');) {
    try {
      widths.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ParseError("bad width '" + tok + "'", 1);
    }
  }
  MlpParams params;
  try {
    params = MlpParams::zeros(widths);
  } catch (const DimensionError& e) {
    throw ParseError(e.what(), 1);
  }
  auto expect_tag = [&](char tag, std::size_t layer, Eigen::Index rows, Eigen::Index cols) {
    char t = 0;
    std::size_t l = 0;
    Eigen::Index r = 0, c = 1;
    in >> t >> l >> r;
    if (tag == 'W') in >> c;
    if (!in || t != tag || l != layer || r != rows || c != cols)
      throw ParseError(fmt::format("expected block {} {} with shape {}x{}", tag, layer, rows, cols), 0);
  };
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    auto w = params.weight(l);
    expect_tag('W', l, w.rows(), w.cols());
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        if (!(in >> w(r, c))) throw ParseError(fmt::format("truncated weight block {}", l), 0);
    auto b = params.bias(l);
    expect_tag('b', l, b.size(), 1);
    for (Eigen::Index i = 0; i < b.size(); ++i)
      if (!(in >> b[i])) throw ParseError(fmt::format("truncated bias block {}", l), 0);
  }
  if (!params.all_finite()) throw ParseError("snapshot contains non-finite values", 0);
  return params;
}

}  // namespace mlbatch
