// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "mlbatch/correlation.hpp"
#include "mlbatch/error.hpp"
#include "mlbatch/selectors.hpp"
#include "oracles.hpp"

using namespace mlbatch;

namespace {

using Script = std::function<double(int epoch, std::size_t instance, std::size_t label)>;

Matrix probs_for(std::span<const std::size_t> idx, std::size_t q, int epoch, const Script& f) {
  Matrix p(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(q));
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t j = 0; j < q; ++j) p(r, j) = f(epoch, idx[r], j);
  return p;
}

/// Forwards every instance once in index order.
void forward_all(BatchSelector& sel, std::size_t q, int epoch, const Script& f) {
  std::vector<std::size_t> all(sel.instances());
  std::iota(all.begin(), all.end(), 0);
  sel.on_batch_forward(all, probs_for(all, q, epoch, f));
}

/// One epoch: batches forwarded with scripted predictions, then a pass
/// over every instance so windows stay aligned.
std::vector<std::vector<std::size_t>> run_epoch(BatchSelector& sel, std::size_t q, int epoch, Rng& rng,
                                                const Script& f, bool top_up = true) {
  sel.on_epoch_start(epoch, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < sel.batches_per_epoch(); ++b) {
    batches.push_back(sel.next_batch(rng));
    sel.on_batch_forward(batches.back(), probs_for(batches.back(), q, epoch, f));
  }
  if (top_up) forward_all(sel, q, epoch, f);
  return batches;
}

SelectorConfig small_config() {
  SelectorConfig c;
  c.batch_size = 4;
  c.warmup = 2;
  c.window = 3;
  c.initial_pressure = 50.0;
  c.bins = 4;
  c.total_epochs = 10;
  return c;
}

bool valid_batch(const std::vector<std::size_t>& batch, std::size_t b, std::size_t n) {
  std::set<std::size_t> s(batch.begin(), batch.end());
  return batch.size() == b && s.size() == b && *s.rbegin() < n;
}

Matrix labels_8x2() {
  Matrix y(8, 2);
  y << 1, 0,
       1, 0,
       1, 1,
       1, 1,
       0, 1,
       0, 0,
       0, 0,
       1, 0;
  return y;
}

}  // namespace

TEST_CASE("random selector covers the epoch once") {
  RandomSelector sel(6, 2);
  Rng rng(1);
  sel.on_epoch_start(1, rng);
  CHECK(sel.batches_per_epoch() == 3);
  std::vector<std::size_t> seen;
  for (int b = 0; b < 3; ++b) {
    auto batch = sel.next_batch(rng);
    CHECK(valid_batch(batch, 2, 6));
    seen.insert(seen.end(), batch.begin(), batch.end());
  }
  std::sort(seen.begin(), seen.end());
  CHECK(seen == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  CHECK_THROWS_AS(sel.next_batch(rng), PreconditionError);

  RandomSelector odd(7, 3);
  odd.on_epoch_start(1, rng);
  std::set<std::size_t> covered;
  for (int b = 0; b < 2; ++b)
    for (auto i : odd.next_batch(rng)) covered.insert(i);
  CHECK(covered.size() == 6);
}

TEST_CASE("balance assigns exact proportions on a single divisible label") {
  Matrix y = Matrix::Zero(12, 1);
  for (int i : {1, 4, 6, 11}) y(i, 0) = 1.0;
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> order(12);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    const auto batches = balance_assign(y, order, 3);
    REQUIRE(batches.size() == 4);
    std::set<std::size_t> all;
    for (const auto& b : batches) {
      CHECK(b.size() == 3);
      double pos = 0;
      for (auto i : b) {
        pos += y(i, 0);
        all.insert(i);
      }
      CHECK(pos == 1.0);
    }
    CHECK(all.size() == 12);
  }
}

TEST_CASE("balance with unlabeled rows is chunking of the visit order") {
  const Matrix y = Matrix::Zero(9, 3);
  const std::vector<std::size_t> order{4, 7, 0, 2, 8, 1, 3, 6, 5};
  const auto batches = balance_assign(y, order, 3);
  CHECK(batches == std::vector<std::vector<std::size_t>>{{4, 7, 0}, {2, 8, 1}, {3, 6, 5}});
}

TEST_CASE("balance stays within one of the target for every visit order") {
  const Matrix y = labels_8x2();
  std::vector<std::size_t> order(8);
  std::iota(order.begin(), order.end(), 0);
  const double target[2] = {4 * 5.0 / 8, 4 * 3.0 / 8};
  std::size_t orders = 0;
  do {
    const auto batches = balance_assign(y, order, 4);
    REQUIRE(batches.size() == 2);
    for (const auto& b : batches) {
      REQUIRE(b.size() == 4);
      for (int j = 0; j < 2; ++j) {
        double c = 0;
        for (auto i : b) c += y(i, j);
        REQUIRE(std::abs(c - target[j]) <= 1.0);
      }
    }
    ++orders;
  } while (std::next_permutation(order.begin(), order.end()));
  CHECK(orders == 40320);
}

TEST_CASE("balance selector covers the epoch once") {
  const Matrix y = labels_8x2();
  BalanceSelector sel(y, 3);
  Rng rng(4);
  sel.on_epoch_start(1, rng);
  std::set<std::size_t> seen;
  for (std::size_t b = 0; b < sel.batches_per_epoch(); ++b) {
    const auto batch = sel.next_batch(rng);
    CHECK(valid_batch(batch, 3, 8));
    seen.insert(batch.begin(), batch.end());
  }
  CHECK(seen.size() == 6);
}

TEST_CASE("scored selectors match random batches during warm-up") {
  const auto cfg = small_config();
  const Script noisy = [](int e, std::size_t i, std::size_t j) {
    return 0.5 + 0.4 * std::sin(1.3 * e + 0.7 * static_cast<double>(i) + 2.1 * static_cast<double>(j));
  };
  for (const char* name : {"ours", "active", "recency"}) {
    CAPTURE(name);
    auto sel = make_selector(name, cfg, Matrix::Zero(10, 3));
    RandomSelector random(10, cfg.batch_size);
    Rng a(5), b(5);
    for (int epoch = 1; epoch <= cfg.warmup; ++epoch) {
      const auto got = run_epoch(*sel, 3, epoch, a, noisy);
      random.on_epoch_start(epoch, b);
      for (const auto& batch : got) CHECK(batch == random.next_batch(b));
      CHECK(sel->pressure() == 1.0);
      auto* scored = dynamic_cast<ScoredSelector*>(sel.get());
      REQUIRE(scored);
      CHECK(scored->warming_up());
      CHECK(scored->probabilities().size() == 0);
    }
  }
}

TEST_CASE("ours refuses to score unfilled windows after warm-up") {
  auto cfg = small_config();
  OursSelector sel(8, 2, cfg);
  Rng rng(6);
  const Script flat = [](int, std::size_t, std::size_t) { return 0.3; };
  run_epoch(sel, 2, 1, rng, flat, false);
  run_epoch(sel, 2, 2, rng, flat, false);
  CHECK_THROWS_AS(sel.on_epoch_start(3, rng), PreconditionError);
}

TEST_CASE("ours with identical uncertainty rows is uniform") {
  auto cfg = small_config();
  OursSelector sel(8, 2, cfg);
  Rng rng(7);
  const Script by_label = [](int e, std::size_t, std::size_t j) { return j ? 0.2 + 0.1 * e : 0.7; };
  for (int e = 1; e <= cfg.warmup; ++e) run_epoch(sel, 2, e, rng, by_label);
  sel.on_epoch_start(cfg.warmup + 1, rng);
  CHECK_FALSE(sel.warming_up());
  CHECK((sel.weights().array() == 0.5).all());
  CHECK((sel.probabilities().array() == 1.0 / 8).all());
  CHECK(valid_batch(sel.next_batch(rng), cfg.batch_size, 8));
}

TEST_CASE("ours updates only forwarded entries") {
  auto cfg = small_config();
  cfg.window = 5;
  OursSelector sel(6, 2, cfg);
  const std::vector<std::size_t> all{0, 1, 2, 3, 4, 5};
  for (int k = 0; k < 5; ++k) sel.on_batch_forward(all, Matrix::Constant(6, 2, 0.2));
  const Matrix before = sel.uncertainty();
  CHECK(before(0, 0) == doctest::Approx(0.5 * 0.721928).epsilon(1e-6));
  CHECK(before(0, 0) == 0.5 * current_entropy(0.2));

  const std::vector<std::size_t> some{3, 3};
  Matrix p(2, 2);
  p << 0.9, 0.2, 0.1, 0.2;
  sel.on_batch_forward(some, p);
  CHECK(sel.histories().at(3, 0).lifetime().count == 7);
  CHECK(sel.histories().at(3, 0).newest() == 0.1);
  CHECK(sel.histories().at(2, 0).lifetime().count == 5);
  for (Eigen::Index i = 0; i < 6; ++i)
    if (i != 3) CHECK(sel.uncertainty().row(i) == before.row(i));
  // window [.2,.2,.2,.9,.1]: d = (0.7 + 0.8) / 4
  CHECK(sel.uncertainty()(3, 0) == doctest::Approx(0.5 * 1.5 / 4 + 0.5 * current_entropy(0.1)));

  CHECK_THROWS_AS(sel.on_batch_forward(std::vector<std::size_t>{6}, Matrix::Constant(1, 2, 0.5)), DomainError);
  CHECK_THROWS_AS(sel.on_batch_forward(std::vector<std::size_t>{1}, Matrix::Constant(1, 3, 0.5)), DimensionError);
}

TEST_CASE("ours matches an independent recomputation of U, C, w and P") {
  auto cfg = small_config();
  const std::size_t n = 12, q = 3;
  OursSelector sel(n, q, cfg);
  Rng rng(8), script_rng(99);
  std::vector<std::vector<std::vector<double>>> log(n, std::vector<std::vector<double>>(q));
  Matrix noise = oracle::random_matrix(n, q, script_rng);
  const Script f = [&](int e, std::size_t i, std::size_t j) {
    return std::clamp(noise(i, j) + 0.15 * std::sin(3.0 * e * (j + 1) + i), 0.0, 1.0);
  };
  for (int e = 1; e <= cfg.warmup + 3; ++e) {
    sel.on_epoch_start(e, rng);
    if (e > cfg.warmup) {
      Matrix u(n, q);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) {
          const auto& h = log[i][j];
          const std::size_t t = cfg.window;
          double d = 0;
          for (std::size_t k = h.size() - t + 1; k < h.size(); ++k) d += std::abs(h[k] - h[k - 1]);
          d /= static_cast<double>(t - 1);
          const double p = h.back();
          const double ent = (p <= 0 || p >= 1) ? 0.0 : -(p * std::log2(p) + (1 - p) * std::log2(1 - p));
          u(i, j) = cfg.lambda1 * d + (1 - cfg.lambda1) * ent;
        }
      const Matrix c = oracle::correlation(u, cfg.bins);
      const Vector raw = oracle::matmul(u, c).rowwise().sum();
      const double lo = raw.minCoeff(), hi = raw.maxCoeff();
      const Vector w = (raw.array() - lo) / (hi - lo);
      const auto p = oracle::selection_probabilities({w.data(), w.data() + n},
                                                     std::pow(cfg.initial_pressure, 1.0 - double(e - cfg.warmup) / (cfg.total_epochs - cfg.warmup)));
      CHECK((sel.uncertainty() - u).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((sel.correlation() - c).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((sel.weights() - w).cwiseAbs().maxCoeff() <= 1e-12);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(sel.probabilities()[i] - p[i]) <= 1e-12);
    }
    for (std::size_t b = 0; b < sel.batches_per_epoch(); ++b) {
      const auto batch = sel.next_batch(rng);
      CHECK(valid_batch(batch, cfg.batch_size, n));
      const Matrix probs = probs_for(batch, q, e, f);
      sel.on_batch_forward(batch, probs);
      for (std::size_t r = 0; r < batch.size(); ++r)
        for (std::size_t j = 0; j < q; ++j) log[batch[r]][j].push_back(probs(r, j));
    }
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    const Matrix probs = probs_for(all, q, e, f);
    sel.on_batch_forward(all, probs);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < q; ++j) log[i][j].push_back(probs(i, j));
  }
}

TEST_CASE("identity correlation ranks like summed uncertainty") {
  auto cfg = small_config();
  cfg.identity_correlation = true;
  OursSelector sel(12, 3, cfg);
  Rng rng(10);
  const Script f = [](int e, std::size_t i, std::size_t j) {
    return 0.5 + 0.45 * std::sin(0.9 * e * static_cast<double>(i + 1) + static_cast<double>(j));
  };
  for (int e = 1; e <= cfg.warmup; ++e) run_epoch(sel, 3, e, rng, f);
  sel.on_epoch_start(cfg.warmup + 1, rng);
  CHECK(sel.correlation() == Matrix::Identity(3, 3));
  const Vector sums = sel.uncertainty().rowwise().sum();
  for (Eigen::Index a = 0; a < 12; ++a)
    for (Eigen::Index b = 0; b < 12; ++b)
      if (sums[a] < sums[b]) CHECK(sel.weights()[a] <= sel.weights()[b]);
}

TEST_CASE("active bias baseline") {
  auto cfg = small_config();
  Rng rng(12);
  {
    ActiveBiasSelector sel(8, 2, cfg);
    const Script flat = [](int, std::size_t i, std::size_t) { return 0.1 * static_cast<double>(i); };
    for (int e = 1; e <= cfg.warmup; ++e) run_epoch(sel, 2, e, rng, flat);
    sel.on_epoch_start(cfg.warmup + 1, rng);
    CHECK((sel.probabilities().array() == 1.0 / 8).all());
  }
  {
    ActiveBiasSelector sel(8, 2, cfg);
    const Script one = [](int e, std::size_t i, std::size_t) {
      return i == 5 ? (e % 2 ? 0.9 : 0.1) : 0.3;
    };
    for (int e = 1; e <= cfg.warmup; ++e) run_epoch(sel, 2, e, rng, one);
    sel.on_epoch_start(cfg.warmup + 1, rng);
    Eigen::Index top = 0;
    sel.probabilities().maxCoeff(&top);
    CHECK(top == 5);
    CHECK(sel.weights()[5] == 1.0);
  }
  {
    // Random trace: scores from retained prediction lists.
    ActiveBiasSelector sel(8, 2, cfg);
    std::vector<std::vector<double>> seen(16);
    Matrix base = oracle::random_matrix(8, 2, rng);
    const Script f = [&](int e, std::size_t i, std::size_t j) {
      return std::clamp(base(i, j) + 0.2 * std::cos(2.0 * e + i * j), 0.0, 1.0);
    };
    for (int e = 1; e <= cfg.warmup; ++e) {
      sel.on_epoch_start(e, rng);
      for (std::size_t b = 0; b < sel.batches_per_epoch(); ++b) {
        const auto batch = sel.next_batch(rng);
        sel.on_batch_forward(batch, probs_for(batch, 2, e, f));
        for (auto i : batch)
          for (std::size_t j = 0; j < 2; ++j) seen[i * 2 + j].push_back(f(e, i, j));
      }
    }
    Vector raw(8);
    for (std::size_t i = 0; i < 8; ++i) {
      raw[i] = 0;
      for (std::size_t j = 0; j < 2; ++j) {
        const auto& h = seen[i * 2 + j];
        const double mean = std::accumulate(h.begin(), h.end(), 0.0) / h.size();
        double var = 0;
        for (double x : h) var += (x - mean) * (x - mean);
        var /= h.size();
        raw[i] += std::sqrt(var + var * var / (h.size() - 1));
      }
    }
    sel.on_epoch_start(cfg.warmup + 1, rng);
    const Vector w = (raw.array() - raw.minCoeff()) / (raw.maxCoeff() - raw.minCoeff());
    CHECK((sel.weights() - w).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("recency bias baseline") {
  auto cfg = small_config();
  cfg.window = 5;
  cfg.warmup = 5;
  Rng rng(14);
  {
    RecencyBiasSelector sel(8, 2, cfg);
    const Script decisive = [](int e, std::size_t i, std::size_t j) {
      return (i + j) % 2 ? 0.6 + 0.05 * e : 0.4 - 0.05 * e;
    };
    for (int e = 1; e <= cfg.warmup; ++e) run_epoch(sel, 2, e, rng, decisive);
    sel.on_epoch_start(cfg.warmup + 1, rng);
    CHECK((sel.probabilities().array() == 1.0 / 8).all());
  }
  {
    RecencyBiasSelector sel(8, 2, cfg);
    const int pattern[5] = {1, 1, 0, 0, 1};
    const Script flip = [&](int e, std::size_t i, std::size_t) {
      return i == 2 ? (pattern[e - 1] ? 0.8 : 0.2) : 0.8;
    };
    for (int e = 1; e <= cfg.warmup; ++e) run_epoch(sel, 2, e, rng, flip);
    sel.on_epoch_start(cfg.warmup + 1, rng);
    Eigen::Index top = 0;
    sel.probabilities().maxCoeff(&top);
    CHECK(top == 2);
  }
  {
    RecencyBiasSelector sel(10, 3, cfg);
    Matrix base = oracle::random_matrix(10, 3, rng);
    const Script f = [&](int e, std::size_t i, std::size_t j) {
      return std::clamp(base(i, j) + 0.3 * std::sin(1.7 * e + i + 2.0 * j), 0.0, 1.0);
    };
    std::vector<std::vector<double>> log(30);
    for (int e = 1; e <= cfg.warmup; ++e) {
      for (const auto& batch : run_epoch(sel, 3, e, rng, f, false))
        for (auto i : batch)
          for (std::size_t j = 0; j < 3; ++j) log[i * 3 + j].push_back(f(e, i, j));
      forward_all(sel, 3, e, f);
      for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 3; ++j) log[i * 3 + j].push_back(f(e, i, j));
    }
    Vector raw(10);
    for (std::size_t i = 0; i < 10; ++i) {
      raw[i] = 0;
      for (std::size_t j = 0; j < 3; ++j) {
        const auto& h = log[i * 3 + j];
        double ones = 0;
        for (std::size_t k = h.size() - 5; k < h.size(); ++k) ones += h[k] >= 0.5 ? 1 : 0;
        for (double pc : {ones / 5, 1 - ones / 5})
          if (pc > 0) raw[i] -= pc * std::log2(pc);
      }
    }
    sel.on_epoch_start(cfg.warmup + 1, rng);
    const Vector w = (raw.array() - raw.minCoeff()) / (raw.maxCoeff() - raw.minCoeff());
    CHECK((sel.weights() - w).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("every selector emits valid deterministic batches") {
  auto cfg = small_config();
  Rng data_rng(15);
  const Matrix y = oracle::random_labels(14, 3, data_rng);
  std::vector<std::size_t> rows(14);
  std::iota(rows.begin(), rows.end(), 100);
  std::stringstream csv;
  csv << "epoch,instance,score\n";
  for (std::size_t r = 100; r < 114; ++r) csv << "3," << r << ',' << (r % 5) * 0.1 << '\n';
  auto scores = std::make_shared<const ExternalScores>(ExternalScores::parse(csv));
  const Script f = [](int e, std::size_t i, std::size_t j) {
    return 0.5 + 0.45 * std::sin(0.37 * e * static_cast<double>(i + 1) + static_cast<double>(j));
  };
  for (auto name : kSelectorNames) {
    CAPTURE(name);
    auto trace = [&] {
      auto sel = make_selector(name, cfg, y, rows, scores);
      Rng rng(16);
      std::vector<std::vector<std::size_t>> all;
      for (int e = 1; e <= 6; ++e)
        for (auto& b : run_epoch(*sel, 3, e, rng, f, sel->tracks_predictions())) all.push_back(b);
      return all;
    };
    const auto a = trace();
    CHECK(a == trace());
    for (const auto& b : a) CHECK(valid_batch(b, cfg.batch_size, 14));
  }
  CHECK_THROWS_AS(make_selector("hard", cfg, y), DomainError);
}

TEST_CASE("external scores") {
  std::stringstream csv("epoch,instance,score\n1,10,0.5\n1,11,2.0\n4,10,1.0\n4,11,0.0\n");
  const auto s = ExternalScores::parse(csv);
  const std::vector<std::size_t> rows{11, 10};
  CHECK_FALSE(s.lookup(0, rows).has_value());
  CHECK(*s.lookup(3, rows) == Vector{{2.0, 0.5}});
  CHECK(*s.lookup(9, rows) == Vector{{0.0, 1.0}});
  const std::vector<std::size_t> missing{12};
  CHECK_THROWS_AS(s.lookup(2, missing), ParseError);

  std::stringstream bad("epoch,instance,score\n1,x,0.5\n");
  CHECK_THROWS_AS(ExternalScores::parse(bad), ParseError);
  std::stringstream header("a,b\n");
  CHECK_THROWS_AS(ExternalScores::parse(header), ParseError);

  auto cfg = small_config();
  auto shared = std::make_shared<const ExternalScores>(s);
  ExternalSelector sel({10, 11, 10, 11, 10, 11, 10, 11}, shared, cfg);
  Rng rng(17);
  sel.on_epoch_start(3, rng);
  CHECK(sel.weights() == Vector{{0, 1, 0, 1, 0, 1, 0, 1}});
  sel.on_epoch_start(5, rng);
  CHECK(sel.weights() == Vector{{1, 0, 1, 0, 1, 0, 1, 0}});
}
