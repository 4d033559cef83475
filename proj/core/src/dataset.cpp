// SPDX-License-Identifier: Apache-2.0
#include "mlbatch/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string_view>

#include "mlbatch/error.hpp"

namespace mlbatch {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto pos = s.find(sep);
    out.push_back(trim(s.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

double parse_real(std::string_view tok, std::size_t line) {
  // strtod handles inf/nan spellings which we then reject explicitly.
  const std::string s(tok);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw ParseError(fmt::format("'{}' is not a number", s), line);
  if (!std::isfinite(v)) throw ParseError(fmt::format("non-finite feature '{}'", s), line);
  return v;
}

std::size_t parse_header_field(std::string_view header, std::string_view key) {
  const std::string pat = std::string(key) + "=";
  const auto pos = header.find(pat);
  if (pos == std::string_view::npos)
    throw ParseError(fmt::format("header lacks '{}'", pat), 1);
  auto rest = header.substr(pos + pat.size());
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), value);
  if (ec != std::errc() || ptr == rest.data())
    throw ParseError(fmt::format("header field '{}' is not an integer", key), 1);
  return value;
}

}  // namespace

MultiLabelDataset MultiLabelDataset::subset(std::span<const std::size_t> rows) const {
  MultiLabelDataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()), labels.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(rows[r]);
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(src);
    out.labels.row(static_cast<Eigen::Index>(r)) = labels.row(src);
  }
  out.label_names = label_names;
  return out;
}

MultiLabelDataset read_mll(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty input, expected '#MLL' header", 1);
  ++lineno;
  const std::string_view header = trim(line);
  if (header.rfind("#MLL", 0) != 0) throw ParseError("first line must start with '#MLL'", 1);
  const std::size_t n = parse_header_field(header, "n");
  const std::size_t d = parse_header_field(header, "d");
  const std::size_t q = parse_header_field(header, "q");
  if (n == 0 || d == 0 || q == 0) throw ParseError("n, d and q must all be positive", 1);

  MultiLabelDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  ds.labels.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));

  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view text = trim(line);
    if (text.empty()) continue;
    if (text.rfind("#labels", 0) == 0 && row == 0 && ds.label_names.empty()) {
      for (auto name : split(trim(text.substr(7)), ',')) ds.label_names.emplace_back(name);
      if (ds.label_names.size() != q)
        throw ParseError(fmt::format("{} label names for q={}", ds.label_names.size(), q), lineno);
      continue;
    }
    if (row == n)
      throw ParseError(fmt::format("more data rows than the declared n={}", n), lineno);
    const auto bar = text.find('|');
    if (bar == std::string_view::npos) throw ParseError("row lacks the '|' separator", lineno);
    const auto feats = split(text.substr(0, bar), ',');
    const auto labs = split(text.substr(bar + 1), ',');
    if (feats.size() != d)
      throw ParseError(fmt::format("row has {} features, header declares d={}", feats.size(), d), lineno);
    if (labs.size() != q)
      throw ParseError(fmt::format("row has {} labels, header declares q={}", labs.size(), q), lineno);
    const auto r = static_cast<Eigen::Index>(row);
    for (std::size_t j = 0; j < d; ++j) ds.features(r, static_cast<Eigen::Index>(j)) = parse_real(feats[j], lineno);
    for (std::size_t j = 0; j < q; ++j) {
      if (labs[j] != "0" && labs[j] != "1")
        throw ParseError(fmt::format("label '{}' is not 0 or 1", labs[j]), lineno);
      ds.labels(r, static_cast<Eigen::Index>(j)) = labs[j] == "1" ? 1.0 : 0.0;
    }
    ++row;
  }
  if (row != n)
    throw ParseError(fmt::format("header declares n={} but the file has {} data rows", n, row), lineno);
  return ds;
}

MultiLabelDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open dataset '{}'", path.string()), 0);
  return read_mll(in);
}

void write_mll(std::ostream& out, const MultiLabelDataset& ds) {
  out << fmt::format("#MLL n={} d={} q={}\n", ds.size(), ds.feature_dim(), ds.label_count());
  if (!ds.label_names.empty()) {
    out << "#labels ";
    for (std::size_t j = 0; j < ds.label_names.size(); ++j) out << (j ? "," : "") << ds.label_names[j];
    out << '\n';
  }
  std::string buf;
  for (Eigen::Index r = 0; r < ds.features.rows(); ++r) {
    buf.clear();
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
      if (j) buf += ',';
      buf += fmt::format("{:.17g}", ds.features(r, j));
    }
    buf += '|';
    for (Eigen::Index j = 0; j < ds.labels.cols(); ++j) {
      if (j) buf += ',';
      buf += ds.labels(r, j) > 0.5 ? '1' : '0';
    }
    out << buf << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, const MultiLabelDataset& ds) {
  std::ofstream out(path);
  if (!out) throw ParseError(fmt::format("cannot write dataset '{}'", path.string()), 0);
  write_mll(out, ds);
}

MinMaxScaler MinMaxScaler::fit(const Matrix& features, std::span<const std::size_t> rows) {
  if (rows.empty()) throw PreconditionError("cannot fit a scaler on an empty training set");
  const auto d = features.cols();
  MinMaxScaler s{Vector::Constant(d, std::numeric_limits<double>::infinity()),
                 Vector::Constant(d, -std::numeric_limits<double>::infinity())};
  for (std::size_t r : rows) {
    const auto row = features.row(static_cast<Eigen::Index>(r)).transpose();
    s.low = s.low.cwiseMin(row);
    s.range = s.range.cwiseMax(row);  // holds the maximum until the end
  }
  s.range -= s.low;
  return s;
}

void MinMaxScaler::transform(Matrix& features) const {
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    if (range[j] > 0.0)
      features.col(j) = (features.col(j).array() - low[j]) / range[j];
    else
      features.col(j).setZero();
  }
}

MultiLabelDataset scale_features(const MultiLabelDataset& ds,
                                 std::span<const std::size_t> train_rows) {
  MultiLabelDataset out = ds;
  MinMaxScaler::fit(ds.features, train_rows).transform(out.features);
  return out;
}

FoldPlan::Split FoldPlan::split(std::size_t round) const {
  const std::size_t kk = k();
  if (kk < 3) throw PreconditionError("train/validation/test rotation needs k >= 3 folds");
  if (round >= kk) throw DomainError(fmt::format("round {} out of range for k={}", round, kk));
  Split s;
  const std::size_t val = (round + 1) % kk;
  for (std::size_t f = 0; f < kk; ++f) {
    auto& dst = f == round ? s.test : f == val ? s.validation : s.train;
    dst.insert(dst.end(), folds[f].begin(), folds[f].end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

FoldPlan stratified_kfold_ordered(const Matrix& labels, std::size_t k,
                                  std::span<const std::size_t> order) {
  const auto n = static_cast<std::size_t>(labels.rows());
  const auto q = static_cast<std::size_t>(labels.cols());
  if (k < 2) throw DomainError(fmt::format("k={} folds; need at least 2", k));
  if (n < k) throw DomainError(fmt::format("cannot split {} instances into {} folds", n, k));
  if (order.size() != n) throw DimensionError("visit order must list every instance once");

  const double ratio = 1.0 / static_cast<double>(k);
  std::vector<double> capacity(k, static_cast<double>(n) * ratio);
  std::vector<std::vector<double>> demand(k, std::vector<double>(q));
  std::vector<std::size_t> remaining(q, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < q; ++j)
      if (labels(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.5) ++remaining[j];
  for (std::size_t f = 0; f < k; ++f)
    for (std::size_t j = 0; j < q; ++j) demand[f][j] = static_cast<double>(remaining[j]) * ratio;

  FoldPlan plan;
  plan.folds.resize(k);
  std::vector<char> assigned(n, 0);
  auto positive = [&](std::size_t i, std::size_t j) {
    return labels(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.5;
  };
  auto place = [&](std::size_t i, std::size_t fold) {
    plan.folds[fold].push_back(i);
    assigned[i] = 1;
    capacity[fold] -= 1.0;
    for (std::size_t j = 0; j < q; ++j) {
      if (!positive(i, j)) continue;
      demand[fold][j] -= 1.0;
      --remaining[j];
    }
  };
  // Most demand for `label` (or most capacity when label == q), then most
  // capacity, then the lowest fold index.
  auto best_fold = [&](std::size_t label) {
    std::size_t best = 0;
    for (std::size_t f = 1; f < k; ++f) {
      const double d_f = label < q ? demand[f][label] : capacity[f];
      const double d_b = label < q ? demand[best][label] : capacity[best];
      if (d_f > d_b || (d_f == d_b && capacity[f] > capacity[best])) best = f;
    }
    return best;
  };

  for (;;) {
    std::size_t label = q;
    for (std::size_t j = 0; j < q; ++j)
      if (remaining[j] > 0 && (label == q || remaining[j] < remaining[label])) label = j;
    if (label == q) break;
    for (std::size_t i : order)
      if (!assigned[i] && positive(i, label)) place(i, best_fold(label));
  }
  for (std::size_t i : order)
    if (!assigned[i]) place(i, best_fold(q));
  return plan;
}

FoldPlan stratified_kfold(const Matrix& labels, std::size_t k, Rng& rng) {
  std::vector<std::size_t> order(static_cast<std::size_t>(labels.rows()));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  return stratified_kfold_ordered(labels, k, order);
}

MultiLabelDataset make_synthetic(std::size_t n, std::size_t d, std::size_t q, Rng& rng,
                                 double label_noise) {
  if (n == 0 || d == 0 || q == 0) throw DomainError("synthetic dataset dimensions must be positive");
  const auto rank = static_cast<Eigen::Index>(std::min<std::size_t>(4, std::max<std::size_t>(q, 2)));
  const auto N = static_cast<Eigen::Index>(n);
  const auto D = static_cast<Eigen::Index>(d);
  const auto Q = static_cast<Eigen::Index>(q);

  Matrix latent(N, rank), mix(rank, D), heads(rank, Q);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index r = 0; r < rank; ++r) latent(i, r) = rng.normal();
  for (Eigen::Index r = 0; r < rank; ++r)
    for (Eigen::Index j = 0; j < D; ++j) mix(r, j) = rng.normal();
  for (Eigen::Index r = 0; r < rank; ++r)
    for (Eigen::Index j = 0; j < Q; ++j) heads(r, j) = rng.normal();

  MultiLabelDataset ds;
  ds.features = latent * mix;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < D; ++j) ds.features(i, j) += 0.5 * rng.normal();

  Matrix score = latent * heads;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < Q; ++j)
      score(i, j) += 0.5 * (latent(i, j % rank) * latent(i, j % rank) - 1.0);

  ds.labels = Matrix::Zero(N, Q);
  for (Eigen::Index j = 0; j < Q; ++j) {
    const double prevalence = 0.1 + 0.3 * rng.uniform();
    std::vector<double> col(score.col(j).data(), score.col(j).data() + N);
    auto cut = col.begin() + static_cast<std::ptrdiff_t>((1.0 - prevalence) * static_cast<double>(n - 1));
    std::nth_element(col.begin(), cut, col.end());
    const double threshold = *cut;
    for (Eigen::Index i = 0; i < N; ++i) {
      bool y = score(i, j) > threshold;
      if (rng.uniform() < label_noise) y = !y;
      ds.labels(i, j) = y ? 1.0 : 0.0;
    }
  }
  return ds;
}

}  // namespace mlbatch
