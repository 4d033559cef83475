// SPDX-License-Identifier: Apache-2.0
#include "mlbatch/config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "mlbatch/error.hpp"

namespace mlbatch {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  while (!v.empty()) {
    const auto pos = v.find(',');
    const auto item = trim(v.substr(0, pos));
    if (!item.empty()) out.emplace_back(item);
    if (pos == std::string_view::npos) break;
    v.remove_prefix(pos + 1);
  }
  return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  v = trim(v);
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    const std::string s(v);
    char* end = nullptr;
    out = static_cast<T>(std::strtod(s.c_str(), &end));
    if (s.empty() || end != s.c_str() + s.size())
      throw ConfigError(fmt::format("{}: '{}' is not a number", key, s));
  } else {
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
      throw ConfigError(fmt::format("{}: '{}' is not a valid integer", key, v));
  }
  return out;
}

template <typename T>
std::vector<T> parse_numbers(std::string_view key, std::string_view v) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(parse_number<T>(key, item));
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, v));
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + fmt::format("{}", xs[i]);
  return out;
}

}  // namespace

void set_config_value(ExperimentConfig& c, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "dataset") c.dataset = std::string(value);
  else if (key == "selector" || key == "selectors") c.selectors = split_list(value);
  else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "epochs") c.epochs = parse_number<int>(key, value);
  else if (key == "warmup") c.warmup = parse_number<int>(key, value);
  else if (key == "window") c.window = parse_number<std::size_t>(key, value);
  else if (key == "lambda1") c.lambda1 = parse_number<double>(key, value);
  else if (key == "s0") c.initial_pressure = parse_number<double>(key, value);
  else if (key == "bins") c.bins = parse_number<int>(key, value);
  else if (key == "hidden") c.hidden = parse_numbers<int>(key, value);
  else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, value);
  else if (key == "weight_decay") c.weight_decay = parse_number<double>(key, value);
  else if (key == "folds") c.folds = parse_number<std::size_t>(key, value);
  else if (key == "rounds") c.rounds = parse_number<std::size_t>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "out") c.out = std::string(value);
  else if (key == "jobs") c.jobs = parse_number<std::size_t>(key, value);
  else if (key == "ablation") c.ablation = std::string(value);
  else if (key == "refresh_full_epoch") c.refresh_full_epoch = parse_bool(key, value);
  else if (key == "grid_s0") c.grid_s0 = parse_numbers<double>(key, value);
  else if (key == "grid_window") c.grid_window = parse_numbers<std::size_t>(key, value);
  else if (key == "grid_lambda1") c.grid_lambda1 = parse_numbers<double>(key, value);
  else if (key == "dump") c.dump = split_list(value);
  else if (key == "corr_diff") c.corr_diff = parse_numbers<int>(key, value);
  else if (key == "external_scores") c.external_scores = std::string(value);
  else if (key == "save_params") c.save_params = parse_bool(key, value);
  else throw ConfigError(fmt::format("unknown config key '{}'", key));
}

ExperimentConfig parse_config(std::istream& in, ExperimentConfig cfg) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view text = line;
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(fmt::format("config line {}: expected 'key = value'", lineno));
    try {
      set_config_value(cfg, text.substr(0, eq), text.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("config line {}: {}", lineno, e.what()));
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  return parse_config(in, std::move(base));
}

void write_config(std::ostream& out, const ExperimentConfig& c) {
  out << "dataset = " << c.dataset.string() << '\n'
      << "selector = " << join(c.selectors) << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "epochs = " << c.epochs << '\n'
      << "warmup = " << c.warmup << '\n'
      << "window = " << c.window << '\n'
      << "lambda1 = " << fmt::format("{}", c.lambda1) << '\n'
      << "s0 = " << fmt::format("{}", c.initial_pressure) << '\n'
      << "bins = " << c.bins << '\n'
      << "hidden = " << join(c.hidden) << '\n'
      << "learning_rate = " << fmt::format("{}", c.learning_rate) << '\n'
      << "weight_decay = " << fmt::format("{}", c.weight_decay) << '\n'
      << "folds = " << c.folds << '\n'
      << "rounds = " << c.rounds << '\n'
      << "seed = " << c.seed << '\n'
      << "out = " << c.out.string() << '\n'
      << "jobs = " << c.jobs << '\n'
      << "ablation = " << c.ablation << '\n'
      << "refresh_full_epoch = " << (c.refresh_full_epoch ? "true" : "false") << '\n'
      << "grid_s0 = " << join(c.grid_s0) << '\n'
      << "grid_window = " << join(c.grid_window) << '\n'
      << "grid_lambda1 = " << join(c.grid_lambda1) << '\n'
      << "dump = " << join(c.dump) << '\n'
      << "corr_diff = " << join(c.corr_diff) << '\n'
      << "external_scores = " << c.external_scores.string() << '\n'
      << "save_params = " << (c.save_params ? "true" : "false") << '\n';
}

bool has_grid(const ExperimentConfig& c) {
  return !c.grid_s0.empty() || !c.grid_window.empty() || !c.grid_lambda1.empty();
}

std::vector<GridPoint> grid_points(const ExperimentConfig& c) {
  const auto s0s = c.grid_s0.empty() ? std::vector<double>{c.initial_pressure} : c.grid_s0;
  const auto windows = c.grid_window.empty() ? std::vector<std::size_t>{c.window} : c.grid_window;
  const auto lambdas = c.grid_lambda1.empty() ? std::vector<double>{c.lambda1} : c.grid_lambda1;
  std::vector<GridPoint> out;
  for (double s0 : s0s)
    for (std::size_t t : windows)
      for (double l : lambdas) out.push_back({s0, t, l});
  return out;
}

std::string GridPoint::tag() const {
  return fmt::format("s0-{}_T-{}_lambda1-{}", initial_pressure, window, lambda1);
}

SelectorConfig selector_config(const ExperimentConfig& c, const GridPoint& p) {
  SelectorConfig sc;
  sc.batch_size = c.batch_size;
  sc.warmup = c.warmup;
  sc.window = p.window;
  sc.lambda1 = p.lambda1;
  sc.initial_pressure = p.initial_pressure;
  sc.bins = c.bins;
  sc.total_epochs = c.epochs;
  if (c.ablation == "current_only") sc.lambda1 = 0.0;
  else if (c.ablation == "window_only") sc.lambda1 = 1.0;
  else if (c.ablation == "no_correlation") sc.identity_correlation = true;
  return sc;
}

void check_warmup_fills(std::string_view selector, const SelectorConfig& sc, bool refresh) {
  const std::size_t per_epoch = refresh ? 2 : 1;
  const std::size_t recorded = static_cast<std::size_t>(std::max(sc.warmup, 0)) * per_epoch;
  std::size_t needed = 0;
  if (selector == "ours" || selector == "recency") needed = sc.window;
  else if (selector == "active") needed = 2;
  if (needed > 0 && sc.warmup < sc.total_epochs && recorded < needed)
    throw ConfigError(fmt::format(
        "selector '{}' needs {} predictions per instance after warm-up but {} warm-up epoch(s) "
        "record only {}; raise warmup or enable refresh_full_epoch",
        selector, needed, sc.warmup, recorded));
}

void validate_config(const ExperimentConfig& c) {
  if (c.selectors.empty()) throw ConfigError("no selector given");
  for (const auto& s : c.selectors)
    if (std::find(std::begin(kSelectorNames), std::end(kSelectorNames), s) == std::end(kSelectorNames))
      throw ConfigError(fmt::format("unknown selector '{}'", s));
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (c.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (c.warmup < 0) throw ConfigError("warmup must be non-negative");
  if (c.bins < 2) throw ConfigError("bins must be at least 2");
  if (c.folds < 3) throw ConfigError("folds must be at least 3 (train/validation/test rotation)");
  if (c.rounds > c.folds) throw ConfigError("rounds cannot exceed folds");
  if (c.hidden.empty()) throw ConfigError("hidden needs at least one layer width");
  for (int h : c.hidden)
    if (h <= 0) throw ConfigError("hidden widths must be positive");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (c.jobs == 0) throw ConfigError("jobs must be at least 1");
  static constexpr std::string_view ablations[] = {"full", "current_only", "window_only", "no_correlation"};
  if (std::find(std::begin(ablations), std::end(ablations), c.ablation) == std::end(ablations))
    throw ConfigError(fmt::format("unknown ablation '{}'", c.ablation));
  for (const auto& d : c.dump)
    if (d != "U" && d != "C" && d != "w" && d != "P")
      throw ConfigError(fmt::format("unknown dump key '{}' (expected U, C, w or P)", d));
  if (!c.corr_diff.empty() && c.corr_diff.size() != 2)
    throw ConfigError("corr_diff takes exactly two epochs");
  if (std::find(c.selectors.begin(), c.selectors.end(), "external") != c.selectors.end() &&
      c.external_scores.empty())
    throw ConfigError("selector 'external' needs external_scores");
  for (const auto& p : grid_points(c)) {
    if (!(p.lambda1 >= 0.0 && p.lambda1 <= 1.0)) throw ConfigError("lambda1 must lie in [0, 1]");
    if (!(p.initial_pressure >= 1.0)) throw ConfigError("s0 must be >= 1");
    if (p.window < 2) throw ConfigError("window must be at least 2");
  }
  // Grid cells are checked when they run so one bad point does not sink
  // the sweep; the base point must be runnable.
  if (!has_grid(c)) {
    const auto sc = selector_config(c, grid_points(c).front());
    for (const auto& s : c.selectors) check_warmup_fills(s, sc, c.refresh_full_epoch);
  }
}

}  // namespace mlbatch
