// SPDX-License-Identifier: Apache-2.0
#include "mlbatch/harness.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <thread>

#include "mlbatch/correlation.hpp"
#include "mlbatch/error.hpp"
#include "mlbatch/sampler.hpp"

namespace mlbatch {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) { return fmt::format("{:.12g}", v); }

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  return out;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  auto out = open_out(path);
  std::string line;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) line += ',';
      line += num(m(r, c));
    }
    out << line << '\n';
  }
}

// Per-epoch snapshots a run writes while it trains.
class EpochDumper {
 public:
  EpochDumper(const DumpOptions* opts, std::span<const std::size_t> dataset_rows)
      : opts_(opts && opts->any() ? opts : nullptr), rows_(dataset_rows) {
    if (opts_) std::filesystem::create_directories(opts_->dir);
  }

  void on_epoch_start(int epoch, const BatchSelector& selector) {
    if (!opts_) return;
    const auto* scored = dynamic_cast<const ScoredSelector*>(&selector);
    if (!scored || scored->warming_up()) return;
    if (const auto* ours = dynamic_cast<const OursSelector*>(scored)) {
      if (opts_->uncertainty)
        write_matrix_csv(opts_->dir / fmt::format("U_epoch_{}.csv", epoch), ours->uncertainty());
      if (opts_->correlation)
        write_matrix_csv(opts_->dir / fmt::format("corr_epoch_{}.csv", epoch), ours->correlation());
      if (opts_->corr_diff.size() == 2) {
        if (epoch == opts_->corr_diff[0]) first_ = ours->correlation();
        if (epoch == opts_->corr_diff[1]) second_ = ours->correlation();
      }
    }
    if (opts_->weights || opts_->probabilities) {
      auto out = open_out(opts_->dir / fmt::format("weights_epoch_{}.csv", epoch));
      out << "instance,w,quantized,p\n";
      const auto& w = scored->weights();
      const auto& p = scored->probabilities();
      const auto n = static_cast<std::size_t>(w.size());
      for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out << rows_[i] << ',' << num(w[k]) << ',' << quantize(w[k], n) << ',' << num(p[k]) << '\n';
      }
    }
  }

  void finish() {
    if (!opts_ || opts_->corr_diff.size() != 2) return;
    if (first_.size() == 0 || second_.size() == 0) {
      spdlog::warn("corr_diff epochs {} and {} were not both selector epochs; no difference written",
                   opts_->corr_diff[0], opts_->corr_diff[1]);
      return;
    }
    write_matrix_csv(opts_->dir / fmt::format("corr_diff_{}_{}.csv", opts_->corr_diff[0],
                                              opts_->corr_diff[1]),
                     second_ - first_);
  }

 private:
  const DumpOptions* opts_;
  std::span<const std::size_t> rows_;
  Matrix first_, second_;
};

double mean_of(const std::vector<double>& xs) {
  return xs.empty() ? kNaN : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return xs.empty() ? kNaN : 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

void write_epoch_csv(std::ostream& out, const std::vector<EpochRecord>& records) {
  out << kEpochCsvHeader << '\n';
  for (const auto& r : records)
    out << r.epoch << ',' << r.selector << ',' << r.fold << ',' << num(r.train_loss) << ','
        << num(r.val_macro_auc) << ',' << num(r.val_ranking_loss) << ',' << num(r.val_hamming_loss)
        << ',' << num(r.pressure) << ',' << fmt::format("{:.6f}", r.wall_seconds) << '\n';
}

DumpOptions DumpOptions::from_config(const ExperimentConfig& cfg, std::filesystem::path dir) {
  DumpOptions d;
  d.dir = std::move(dir);
  for (const auto& k : cfg.dump) {
    if (k == "U") d.uncertainty = true;
    else if (k == "C") d.correlation = true;
    else if (k == "w") d.weights = true;
    else if (k == "P") d.probabilities = true;
  }
  d.corr_diff = cfg.corr_diff;
  return d;
}

std::uint64_t cell_seed(std::uint64_t seed, std::size_t fold, std::size_t grid_index) {
  return derive_seed(seed, (static_cast<std::uint64_t>(grid_index) << 20) ^ fold);
}

FoldPlan experiment_folds(const ExperimentConfig& cfg, const Matrix& labels) {
  Rng rng(derive_seed(cfg.seed, 0xF01DF01DULL));
  return stratified_kfold(labels, cfg.folds, rng);
}

EvaluationReport evaluate_lenient(const Matrix& scores, const Matrix& labels) {
  EvaluationReport r;
  try {
    r.macro_auc = macro_auc(scores, labels, &r);
  } catch (const PreconditionError&) {
    r.macro_auc = kNaN;
  }
  try {
    r.ranking_loss = ranking_loss(scores, labels, &r);
  } catch (const PreconditionError&) {
    r.ranking_loss = kNaN;
  }
  r.hamming_loss = hamming_loss(scores, labels);
  return r;
}

RunResult run_training(const ExperimentConfig& cfg, const RunInputs& in) {
  using clock = std::chrono::steady_clock;
  const MultiLabelDataset& raw = *in.dataset;
  const auto& split = in.split;
  if (split.train.empty() || split.validation.empty() || split.test.empty())
    throw PreconditionError("train, validation and test sets must all be non-empty");

  const auto scaled = scale_features(raw, split.train);
  const Matrix x_train = gather_rows(scaled.features, split.train);
  const Matrix y_train = gather_rows(scaled.labels, split.train);
  const Matrix x_val = gather_rows(scaled.features, split.validation);
  const Matrix y_val = gather_rows(scaled.labels, split.validation);
  const Matrix x_test = gather_rows(scaled.features, split.test);
  const Matrix y_test = gather_rows(scaled.labels, split.test);

  const SelectorConfig sc = selector_config(cfg, in.grid);
  check_warmup_fills(in.selector, sc, cfg.refresh_full_epoch);

  Rng rng(cell_seed(cfg.seed, in.fold, in.grid_index));
  std::vector<int> widths{static_cast<int>(raw.feature_dim())};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(static_cast<int>(raw.label_count()));
  MlpParams params = MlpParams::glorot(widths, rng);
  AdamState adam(params, AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});

  auto selector = make_selector(in.selector, sc, y_train, split.train, in.external);
  EpochDumper dumper(in.dumps, split.train);

  RunResult result;
  result.selector = in.selector;
  result.fold = in.fold;
  result.grid = in.grid;
  double best_auc = -std::numeric_limits<double>::infinity();
  const std::size_t n = split.train.size();
  std::vector<char> forwarded(n);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);

  try {
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      const auto t0 = clock::now();
      selector->on_epoch_start(epoch, rng);
      dumper.on_epoch_start(epoch, *selector);

      std::fill(forwarded.begin(), forwarded.end(), 0);
      double loss_sum = 0.0;
      const std::size_t batches = selector->batches_per_epoch();
      for (std::size_t b = 0; b < batches; ++b) {
        const auto idx = selector->next_batch(rng);
        const Matrix xb = gather_rows(x_train, idx);
        const Matrix yb = gather_rows(y_train, idx);
        auto lg = backward(params, xb, yb);
        if (!std::isfinite(lg.loss))
          throw NumericError(fmt::format("loss is {} at epoch {} batch {}", lg.loss, epoch, b + 1));
        selector->on_batch_forward(idx, lg.probs);
        adam_step(adam, params, lg.grad);
        loss_sum += lg.loss;
        for (std::size_t i : idx) forwarded[i] = 1;
      }

      if (selector->tracks_predictions()) {
        if (cfg.refresh_full_epoch) {
          selector->on_batch_forward(all, forward(params, x_train));
        } else if (epoch <= sc.warmup) {
          // Instances dropped with the partial last chunk still need a
          // prediction so every window fills during warm-up.
          std::vector<std::size_t> missing;
          for (std::size_t i = 0; i < n; ++i)
            if (!forwarded[i]) missing.push_back(i);
          if (!missing.empty()) selector->on_batch_forward(missing, forward(params, gather_rows(x_train, missing)));
        }
      }

      const auto val = evaluate_lenient(forward(params, x_val), y_val);
      EpochRecord rec;
      rec.epoch = epoch;
      rec.selector = in.selector;
      rec.fold = in.fold;
      rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : kNaN;
      rec.val_macro_auc = val.macro_auc;
      rec.val_ranking_loss = val.ranking_loss;
      rec.val_hamming_loss = val.hamming_loss;
      rec.pressure = selector->pressure();
      if (!std::isnan(val.macro_auc) && val.macro_auc > best_auc) {
        best_auc = val.macro_auc;
        result.best_epoch = epoch;
        result.best_val_macro_auc = val.macro_auc;
        result.test = evaluate_lenient(forward(params, x_test), y_test);
      }
      rec.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
      result.epochs.push_back(rec);
    }
  } catch (const NumericError& e) {
    result.status = fmt::format("numeric failure: {}", e.what());
    spdlog::error("{} fold {}: {}", in.selector, in.fold, e.what());
  }
  dumper.finish();
  result.final_params = std::move(params);
  return result;
}

std::string epoch_csv_name(const std::string& selector, std::size_t fold, const GridPoint& grid,
                           bool grid_active) {
  if (!grid_active) return fmt::format("epochs_{}_{}.csv", selector, fold);
  return fmt::format("epochs_{}_{}_{}.csv", selector, grid.tag(), fold);
}

std::vector<SummaryRow> summarize(const std::vector<RunResult>& runs) {
  // Group in first-seen order so the file layout follows the run order.
  std::vector<std::pair<std::string, GridPoint>> keys;
  std::vector<std::vector<const RunResult*>> groups;
  for (const auto& r : runs) {
    std::size_t g = 0;
    for (; g < keys.size(); ++g)
      if (keys[g].first == r.selector && keys[g].second.tag() == r.grid.tag()) break;
    if (g == keys.size()) {
      keys.emplace_back(r.selector, r.grid);
      groups.emplace_back();
    }
    groups[g].push_back(&r);
  }

  std::vector<SummaryRow> rows;
  for (std::size_t g = 0; g < keys.size(); ++g) {
    auto members = groups[g];
    std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return a->fold < b->fold; });
    std::vector<double> epochs, auc, rl, hl, val;
    std::size_t failed = 0;
    for (const auto* r : members) {
      SummaryRow row;
      row.selector = r->selector;
      row.grid = r->grid;
      row.fold = std::to_string(r->fold);
      row.status = r->status;
      const bool usable = r->status == "ok" && r->best_epoch > 0;
      row.best_epoch = r->best_epoch;
      row.test_macro_auc = usable ? r->test.macro_auc : kNaN;
      row.test_ranking_loss = usable ? r->test.ranking_loss : kNaN;
      row.test_hamming_loss = usable ? r->test.hamming_loss : kNaN;
      row.best_val_macro_auc = usable ? r->best_val_macro_auc : kNaN;
      row.test_macro_auc_std = row.test_ranking_loss_std = row.test_hamming_loss_std =
          row.best_val_macro_auc_std = kNaN;
      if (usable) {
        epochs.push_back(r->best_epoch);
        auc.push_back(row.test_macro_auc);
        rl.push_back(row.test_ranking_loss);
        hl.push_back(row.test_hamming_loss);
        val.push_back(row.best_val_macro_auc);
      } else {
        ++failed;
      }
      rows.push_back(std::move(row));
    }
    SummaryRow mean;
    mean.selector = keys[g].first;
    mean.grid = keys[g].second;
    mean.fold = "mean";
    mean.best_epoch = mean_of(epochs);
    mean.test_macro_auc = mean_of(auc);
    mean.test_macro_auc_std = std_of(auc);
    mean.test_ranking_loss = mean_of(rl);
    mean.test_ranking_loss_std = std_of(rl);
    mean.test_hamming_loss = mean_of(hl);
    mean.test_hamming_loss_std = std_of(hl);
    mean.best_val_macro_auc = mean_of(val);
    mean.best_val_macro_auc_std = std_of(val);
    mean.status = failed ? fmt::format("{} of {} folds failed", failed, members.size()) : "ok";
    rows.push_back(std::move(mean));
  }
  return rows;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  auto opt = [](double v) { return std::isnan(v) ? std::string() : num(v); };
  out << kSummaryCsvHeader << '\n';
  for (const auto& r : rows) {
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << r.selector << ',' << num(r.grid.initial_pressure) << ',' << r.grid.window << ','
        << num(r.grid.lambda1) << ',' << r.fold << ',' << opt(r.best_epoch) << ','
        << opt(r.test_macro_auc) << ',' << opt(r.test_macro_auc_std) << ','
        << opt(r.test_ranking_loss) << ',' << opt(r.test_ranking_loss_std) << ','
        << opt(r.test_hamming_loss) << ',' << opt(r.test_hamming_loss_std) << ','
        << opt(r.best_val_macro_auc) << ',' << opt(r.best_val_macro_auc_std) << ',' << status << '\n';
  }
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const auto dataset = load_dataset(cfg.dataset);
  const FoldPlan plan = experiment_folds(cfg, dataset.labels);
  std::shared_ptr<const ExternalScores> external;
  if (!cfg.external_scores.empty())
    external = std::make_shared<const ExternalScores>(ExternalScores::load(cfg.external_scores));

  const auto points = grid_points(cfg);
  const bool grid_active = has_grid(cfg);
  const std::size_t rounds = cfg.rounds ? cfg.rounds : plan.k();

  struct Cell {
    std::string selector;
    std::size_t grid_index;
    std::size_t fold;
  };
  std::vector<Cell> cells;
  for (const auto& s : cfg.selectors)
    for (std::size_t g = 0; g < points.size(); ++g)
      for (std::size_t f = 0; f < rounds; ++f) cells.push_back({s, g, f});

  std::filesystem::create_directories(cfg.out);
  std::vector<RunResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < cells.size(); c = next++) {
      const Cell& cell = cells[c];
      const GridPoint& point = points[cell.grid_index];
      DumpOptions dumps;
      if (!cfg.dump.empty() || !cfg.corr_diff.empty()) {
        const std::string sub = grid_active
                                    ? fmt::format("dumps_{}_{}_{}", cell.selector, point.tag(), cell.fold)
                                    : fmt::format("dumps_{}_{}", cell.selector, cell.fold);
        dumps = DumpOptions::from_config(cfg, cfg.out / sub);
      }
      RunInputs inputs{&dataset, plan.split(cell.fold), cell.fold, cell.selector, point,
                       cell.grid_index, external, &dumps};
      RunResult r;
      try {
        r = run_training(cfg, inputs);
      } catch (const std::exception& e) {
        r.selector = cell.selector;
        r.fold = cell.fold;
        r.grid = point;
        r.status = fmt::format("error: {}", e.what());
        spdlog::error("{} fold {} ({}): {}", cell.selector, cell.fold, point.tag(), e.what());
      }
      {
        auto out = open_out(cfg.out / epoch_csv_name(cell.selector, cell.fold, point, grid_active));
        write_epoch_csv(out, r.epochs);
      }
      if (cfg.save_params && r.status == "ok") {
        auto name = epoch_csv_name(cell.selector, cell.fold, point, grid_active);
        name.replace(0, 6, "params");
        name.replace(name.size() - 4, 4, ".txt");
        auto out = open_out(cfg.out / name);
        save_params(out, r.final_params);
      }
      spdlog::info("{} fold {}{}: best epoch {} val AUC {:.4f} test AUC {:.4f} [{}]", r.selector,
                   r.fold, grid_active ? " " + point.tag() : "", r.best_epoch, r.best_val_macro_auc,
                   r.test.macro_auc, r.status);
      results[c] = std::move(r);
    }
  };
  const std::size_t threads = std::min(cfg.jobs, cells.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  ExperimentResult out;
  out.summary = summarize(results);
  out.runs = std::move(results);
  auto summary = open_out(cfg.out / "summary.csv");
  write_summary_csv(summary, out.summary);
  return out;
}

}  // namespace mlbatch
