#include "data.hpp"

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rng.hpp"

namespace hdlcnn {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  std::size_t end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

Table parse_csv(const std::string& text, const std::string& origin) {
  std::vector<std::string> lines;
  {
    std::istringstream stream(text);
    std::string line;
    while (std::getline(stream, line)) {
      if (!trim(line).empty()) lines.push_back(line);
    }
  }
  if (lines.empty()) {
    throw std::invalid_argument(origin + ": empty csv file");
  }

  Table table;
  table.column_names = split_cells(lines[0]);
  const int n_cols = static_cast<int>(table.column_names.size());
  if (n_cols == 0) {
    throw std::invalid_argument(origin + ": header row has no columns");
  }
  if (lines.size() == 1) {
    throw std::invalid_argument(origin + ": no data rows");
  }

  const int n_rows = static_cast<int>(lines.size()) - 1;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n_rows) * n_cols);

  for (int row = 1; row <= n_rows; ++row) {
    const std::vector<std::string> cells = split_cells(lines[static_cast<std::size_t>(row)]);
    if (static_cast<int>(cells.size()) != n_cols) {
      throw std::invalid_argument(origin + ": row " + std::to_string(row) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(n_cols));
    }
    for (int col = 0; col < n_cols; ++col) {
      const std::string& cell = cells[static_cast<std::size_t>(col)];
      double parsed = 0.0;
      const char* begin = cell.data();
      const char* end = begin + cell.size();
      const auto [ptr, ec] = std::from_chars(begin, end, parsed);
      if (ec != std::errc() || ptr != end || cell.empty()) {
        throw std::invalid_argument(origin + ": row " + std::to_string(row) +
                                 " col " + std::to_string(col + 1) +
                                 ": cannot parse '" + cell + "' as a number");
      }
      values.push_back(parsed);
    }
  }

  table.values = Tensor({n_rows, n_cols}, std::move(values));
  return table;
}

Table load_csv(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw std::runtime_error(path + ": cannot open file");
  }
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_csv(buffer.str(), path);
}

NormStats fit_normalizer(const Tensor& table) {
  if (table.rank() != 2) {
    throw std::invalid_argument("normalizer expects a rank-2 table, got " +
                                table.shape_string());
  }
  const int n = table.dim(0);
  const int p = table.dim(1);
  NormStats stats;
  stats.min.assign(static_cast<std::size_t>(p), 0.0);
  stats.max.assign(static_cast<std::size_t>(p), 0.0);
  stats.degenerate.assign(static_cast<std::size_t>(p), false);
  const double* data = table.data();
  for (int f = 0; f < p; ++f) {
    double lo = data[f];
    double hi = data[f];
    for (int row = 1; row < n; ++row) {
      const double v = data[static_cast<std::size_t>(row) * p + f];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    stats.min[static_cast<std::size_t>(f)] = lo;
    stats.max[static_cast<std::size_t>(f)] = hi;
    stats.degenerate[static_cast<std::size_t>(f)] = (lo == hi);
  }
  return stats;
}

Tensor apply_normalizer(const Tensor& table, const NormStats& stats) {
  if (table.rank() != 2) {
    throw std::invalid_argument("normalizer expects a rank-2 table, got " +
                                table.shape_string());
  }
  const int n = table.dim(0);
  const int p = table.dim(1);
  if (static_cast<std::size_t>(p) != stats.min.size()) {
    throw std::invalid_argument("normalizer fitted on " +
                                std::to_string(stats.min.size()) +
                                " features, table has " + std::to_string(p));
  }
  Tensor out(table.shape());
  const double* src = table.data();
  double* dst = out.data();
  for (int row = 0; row < n; ++row) {
    for (int f = 0; f < p; ++f) {
      const std::size_t i = static_cast<std::size_t>(row) * p + f;
      if (stats.degenerate[static_cast<std::size_t>(f)]) {
        dst[i] = 0.0;  // constant column carries no signal
      } else {
        const double lo = stats.min[static_cast<std::size_t>(f)];
        const double hi = stats.max[static_cast<std::size_t>(f)];
        dst[i] = (src[i] - lo) / (hi - lo);  // unclamped outside the fit range
      }
    }
  }
  return out;
}

std::vector<Tensor> window_table(const Tensor& table, int width, int stride) {
  if (table.rank() != 2) {
    throw std::invalid_argument("windowing expects a rank-2 table, got " +
                                table.shape_string());
  }
  if (width <= 0 || stride <= 0) {
    throw std::invalid_argument("window width and stride must be positive");
  }
  const int n = table.dim(0);
  const int p = table.dim(1);
  if (n < width) {
    throw std::invalid_argument("window width " + std::to_string(width) +
                                " exceeds the table's " + std::to_string(n) +
                                " rows");
  }
  std::vector<Tensor> windows;
  const int count = (n - width) / stride + 1;
  windows.reserve(static_cast<std::size_t>(count));
  const double* src = table.data();
  for (int w = 0; w < count; ++w) {
    const int start = w * stride;
    Tensor sample({1, p, width});
    double* dst = sample.data();
    for (int f = 0; f < p; ++f) {
      for (int tau = 0; tau < width; ++tau) {
        dst[static_cast<std::size_t>(f) * width + tau] =
            src[static_cast<std::size_t>(start + tau) * p + f];
      }
    }
    windows.push_back(std::move(sample));
  }
  return windows;
}

int Dataset::n_features() const {
  return samples.empty() ? 0 : samples.front().dim(1);
}

int Dataset::n_timesteps() const {
  return samples.empty() ? 0 : samples.front().dim(2);
}

void check_dataset(const Dataset& dataset) {
  if (dataset.samples.empty()) {
    throw std::invalid_argument("dataset has no samples");
  }
  if (dataset.samples.size() != dataset.labels.size()) {
    throw std::invalid_argument("dataset has " +
                                std::to_string(dataset.samples.size()) +
                                " samples but " +
                                std::to_string(dataset.labels.size()) + " labels");
  }
  if (dataset.class_names.empty()) {
    throw std::invalid_argument("dataset has no class names");
  }
  const std::vector<int>& shape = dataset.samples.front().shape();
  if (shape.size() != 3 || shape[0] != 1) {
    throw std::invalid_argument("dataset samples must be [1, features, timesteps], got " +
                                dataset.samples.front().shape_string());
  }
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    if (dataset.samples[i].shape() != shape) {
      throw std::invalid_argument("sample " + std::to_string(i) + " shaped " +
                                  dataset.samples[i].shape_string() +
                                  " differs from " + shape_string(shape));
    }
    const int label = dataset.labels[i];
    if (label < 0 || label >= dataset.n_classes()) {
      throw std::invalid_argument("sample " + std::to_string(i) + " label " +
                                  std::to_string(label) + " out of range for " +
                                  std::to_string(dataset.n_classes()) + " classes");
    }
  }
}

Tensor feature_matrix(const Dataset& dataset) {
  check_dataset(dataset);
  const int p = dataset.n_features();
  const int t = dataset.n_timesteps();
  const int rows = static_cast<int>(dataset.samples.size()) * t;
  Tensor features({rows, p});
  double* dst = features.data();
  int row = 0;
  for (const Tensor& sample : dataset.samples) {
    const double* src = sample.data();
    for (int tau = 0; tau < t; ++tau, ++row) {
      for (int f = 0; f < p; ++f) {
        dst[static_cast<std::size_t>(row) * p + f] =
            src[static_cast<std::size_t>(f) * t + tau];
      }
    }
  }
  return features;
}

namespace {

void check_permutation(const std::vector<int>& perm, int p, const std::string& what) {
  if (static_cast<int>(perm.size()) != p) {
    throw std::invalid_argument(what + " has " + std::to_string(perm.size()) +
                                " entries, expected " + std::to_string(p));
  }
  std::vector<bool> seen(static_cast<std::size_t>(p), false);
  for (int v : perm) {
    if (v < 0 || v >= p || seen[static_cast<std::size_t>(v)]) {
      throw std::invalid_argument(what + " is not a permutation of 0.." +
                                  std::to_string(p - 1));
    }
    seen[static_cast<std::size_t>(v)] = true;
  }
}

}  // namespace

Dataset permute_features(const Dataset& dataset, const std::vector<int>& perm) {
  check_dataset(dataset);
  const int p = dataset.n_features();
  const int t = dataset.n_timesteps();
  check_permutation(perm, p, "feature permutation");

  Dataset out;
  out.labels = dataset.labels;
  out.class_names = dataset.class_names;
  out.samples.reserve(dataset.samples.size());
  for (const Tensor& sample : dataset.samples) {
    Tensor permuted({1, p, t});
    const double* src = sample.data();
    double* dst = permuted.data();
    for (int k = 0; k < p; ++k) {
      const double* src_row = src + static_cast<std::size_t>(perm[static_cast<std::size_t>(k)]) * t;
      std::copy(src_row, src_row + t, dst + static_cast<std::size_t>(k) * t);
    }
    out.samples.push_back(std::move(permuted));
  }
  if (!dataset.norm_stats.min.empty()) {
    out.norm_stats.min.resize(static_cast<std::size_t>(p));
    out.norm_stats.max.resize(static_cast<std::size_t>(p));
    out.norm_stats.degenerate.resize(static_cast<std::size_t>(p));
    for (int k = 0; k < p; ++k) {
      const std::size_t s = static_cast<std::size_t>(perm[static_cast<std::size_t>(k)]);
      out.norm_stats.min[static_cast<std::size_t>(k)] = dataset.norm_stats.min[s];
      out.norm_stats.max[static_cast<std::size_t>(k)] = dataset.norm_stats.max[s];
      out.norm_stats.degenerate[static_cast<std::size_t>(k)] = dataset.norm_stats.degenerate[s];
    }
  }
  return out;
}

SynthConfig default_synth_config() {
  SynthConfig config;
  config.n_features = 12;
  config.blocks = {{{0, 1, 2, 3, 4, 5}, 0.9}, {{6, 7, 8, 9, 10, 11}, 0.9}};
  config.ar_coefficients.assign(12, 0.8);
  SynthFault mean_fault;
  mean_fault.name = "mean_shift";
  mean_fault.root_feature = 2;
  mean_fault.onset_fraction = 0.3;
  mean_fault.mean_shift = 3.0;
  mean_fault.variance_multiplier = 1.0;
  mean_fault.propagation = 0.4;
  SynthFault variance_fault;
  variance_fault.name = "variance";
  variance_fault.root_feature = 8;
  variance_fault.onset_fraction = 0.3;
  variance_fault.mean_shift = 0.0;
  variance_fault.variance_multiplier = 4.0;
  variance_fault.propagation = 0.4;
  config.faults = {mean_fault, variance_fault};
  return config;
}

namespace {

// Lower-triangular Cholesky factor of the equicorrelation matrix for one
// block; fails when the block is not positive definite.
std::vector<double> block_cholesky(int k, double rho, int block_index) {
  std::vector<double> m(static_cast<std::size_t>(k) * k, 0.0);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      m[static_cast<std::size_t>(i) * k + j] = (i == j) ? 1.0 : rho;
    }
  }
  std::vector<double> chol(static_cast<std::size_t>(k) * k, 0.0);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j <= i; ++j) {
      double acc = m[static_cast<std::size_t>(i) * k + j];
      for (int s = 0; s < j; ++s) {
        acc -= chol[static_cast<std::size_t>(i) * k + s] *
               chol[static_cast<std::size_t>(j) * k + s];
      }
      if (i == j) {
        if (acc <= 0.0) {
          throw std::invalid_argument(
              "block " + std::to_string(block_index) + " correlation " +
              std::to_string(rho) + " is not positive definite for size " +
              std::to_string(k));
        }
        chol[static_cast<std::size_t>(i) * k + j] = std::sqrt(acc);
      } else {
        chol[static_cast<std::size_t>(i) * k + j] =
            acc / chol[static_cast<std::size_t>(j) * k + j];
      }
    }
  }
  return chol;
}

struct SynthPlan {
  std::vector<std::vector<double>> block_chol;  // per block
  std::vector<int> block_of;                    // owning block per feature
  std::vector<double> ar;
  std::vector<double> stationary_std;
  std::vector<std::string> class_names;
};

SynthPlan validate_synth_config(const SynthConfig& config) {
  if (config.n_features < 2) {
    throw std::invalid_argument("synthetic config needs at least 2 features");
  }
  if (config.window_width <= 0 || config.window_stride <= 0) {
    throw std::invalid_argument("window width and stride must be positive");
  }
  if (config.faults.empty()) {
    throw std::invalid_argument("synthetic config needs at least one fault class");
  }
  const int n_classes = 1 + static_cast<int>(config.faults.size());
  if (config.train_windows < n_classes || config.test_windows < n_classes) {
    throw std::invalid_argument(
        "window budget too small: " + std::to_string(config.train_windows) +
        " train / " + std::to_string(config.test_windows) + " test for " +
        std::to_string(n_classes) + " classes");
  }

  SynthPlan plan;
  plan.block_of.assign(static_cast<std::size_t>(config.n_features), -1);
  for (std::size_t b = 0; b < config.blocks.size(); ++b) {
    const SynthBlock& block = config.blocks[b];
    if (block.features.empty()) {
      throw std::invalid_argument("block " + std::to_string(b) + " is empty");
    }
    for (int f : block.features) {
      if (f < 0 || f >= config.n_features) {
        throw std::invalid_argument("block " + std::to_string(b) +
                                    " references feature " + std::to_string(f) +
                                    " outside 0.." +
                                    std::to_string(config.n_features - 1));
      }
      if (plan.block_of[static_cast<std::size_t>(f)] != -1) {
        throw std::invalid_argument("feature " + std::to_string(f) +
                                    " appears in more than one block");
      }
      plan.block_of[static_cast<std::size_t>(f)] = static_cast<int>(b);
    }
    plan.block_chol.push_back(block_cholesky(
        static_cast<int>(block.features.size()), block.correlation,
        static_cast<int>(b)));
  }
  for (int f = 0; f < config.n_features; ++f) {
    if (plan.block_of[static_cast<std::size_t>(f)] == -1) {
      throw std::invalid_argument(
          "feature " + std::to_string(f) +
          " belongs to no block; blocks must cover every feature"
          " (use a singleton block for an independent feature)");
    }
  }

  if (config.ar_coefficients.empty()) {
    plan.ar.assign(static_cast<std::size_t>(config.n_features), 0.8);
  } else if (config.ar_coefficients.size() == 1) {
    plan.ar.assign(static_cast<std::size_t>(config.n_features),
                   config.ar_coefficients.front());
  } else if (config.ar_coefficients.size() ==
             static_cast<std::size_t>(config.n_features)) {
    plan.ar = config.ar_coefficients;
  } else {
    throw std::invalid_argument(
        "expected 1 or " + std::to_string(config.n_features) +
        " AR coefficients, got " + std::to_string(config.ar_coefficients.size()));
  }
  for (std::size_t f = 0; f < plan.ar.size(); ++f) {
    if (std::fabs(plan.ar[f]) >= 1.0) {
      throw std::invalid_argument("AR coefficient for feature " +
                                  std::to_string(f) + " must satisfy |a| < 1, got " +
                                  std::to_string(plan.ar[f]));
    }
    plan.stationary_std.push_back(1.0 / std::sqrt(1.0 - plan.ar[f] * plan.ar[f]));
  }

  plan.class_names.push_back("normal");
  for (std::size_t k = 0; k < config.faults.size(); ++k) {
    const SynthFault& fault = config.faults[k];
    if (fault.root_feature < 0 || fault.root_feature >= config.n_features) {
      throw std::invalid_argument("fault " + std::to_string(k) +
                                  " root feature " +
                                  std::to_string(fault.root_feature) +
                                  " outside 0.." +
                                  std::to_string(config.n_features - 1));
    }
    if (fault.onset_fraction < 0.0 || fault.onset_fraction >= 1.0) {
      throw std::invalid_argument("fault " + std::to_string(k) +
                                  " onset fraction must lie in [0, 1)");
    }
    if (fault.variance_multiplier <= 0.0) {
      throw std::invalid_argument("fault " + std::to_string(k) +
                                  " variance multiplier must be positive");
    }
    if (fault.propagation < 0.0 || fault.propagation > 1.0) {
      throw std::invalid_argument("fault " + std::to_string(k) +
                                  " propagation must lie in [0, 1]");
    }
    plan.class_names.push_back(fault.name.empty()
                                   ? "fault_" + std::to_string(k + 1)
                                   : fault.name);
  }
  return plan;
}

// One multivariate innovation draw; block members get correlated components.
void draw_innovations(const SynthConfig& config, const SynthPlan& plan, Rng& rng,
                      std::vector<double>& eps) {
  for (std::size_t b = 0; b < config.blocks.size(); ++b) {
    const std::vector<int>& members = config.blocks[b].features;
    const int k = static_cast<int>(members.size());
    const std::vector<double>& chol = plan.block_chol[b];
    std::vector<double> g(static_cast<std::size_t>(k));
    for (double& v : g) v = rng.normal();
    for (int i = 0; i < k; ++i) {
      double acc = 0.0;
      for (int j = 0; j <= i; ++j) {
        acc += chol[static_cast<std::size_t>(i) * k + j] * g[static_cast<std::size_t>(j)];
      }
      eps[static_cast<std::size_t>(members[static_cast<std::size_t>(i)])] = acc;
    }
  }
}

constexpr int kBurnIn = 200;

// Rows of one labeled series; only the fault-active region is returned.
Tensor generate_series(const SynthConfig& config, const SynthPlan& plan,
                       const SynthFault* fault, int active_rows,
                       std::uint64_t seed) {
  int lead = 0;
  if (fault != nullptr && fault->onset_fraction > 0.0) {
    // Lead-in of normal operation so the fault starts at roughly the
    // configured fraction of the simulated span.
    lead = static_cast<int>(std::ceil(fault->onset_fraction /
                                      (1.0 - fault->onset_fraction) *
                                      active_rows));
  }
  const int total = kBurnIn + lead + active_rows;
  const int p = config.n_features;

  std::vector<double> weight(static_cast<std::size_t>(p), 0.0);
  if (fault != nullptr) {
    weight[static_cast<std::size_t>(fault->root_feature)] = 1.0;
    const int root_block = plan.block_of[static_cast<std::size_t>(fault->root_feature)];
    for (int f : config.blocks[static_cast<std::size_t>(root_block)].features) {
      if (f != fault->root_feature) {
        weight[static_cast<std::size_t>(f)] = fault->propagation;
      }
    }
  }

  Rng rng(seed);
  std::vector<double> state(static_cast<std::size_t>(p), 0.0);
  std::vector<double> eps(static_cast<std::size_t>(p), 0.0);
  Tensor rows({active_rows, p});
  double* dst = rows.data();

  for (int t = 0; t < total; ++t) {
    draw_innovations(config, plan, rng, eps);
    const bool active = fault != nullptr && t >= kBurnIn + lead;
    for (int f = 0; f < p; ++f) {
      double e = eps[static_cast<std::size_t>(f)];
      if (active && fault->variance_multiplier != 1.0) {
        e *= 1.0 + weight[static_cast<std::size_t>(f)] *
                       (fault->variance_multiplier - 1.0);
      }
      state[static_cast<std::size_t>(f)] =
          plan.ar[static_cast<std::size_t>(f)] * state[static_cast<std::size_t>(f)] + e;
    }
    if (t >= kBurnIn + lead) {
      const int row = t - kBurnIn - lead;
      for (int f = 0; f < p; ++f) {
        double v = state[static_cast<std::size_t>(f)];
        if (active && fault->mean_shift != 0.0) {
          v += weight[static_cast<std::size_t>(f)] * fault->mean_shift *
               plan.stationary_std[static_cast<std::size_t>(f)];
        }
        dst[static_cast<std::size_t>(row) * p + f] = v;
      }
    }
  }
  return rows;
}

std::vector<int> split_counts(int total, int n_classes) {
  std::vector<int> counts(static_cast<std::size_t>(n_classes), total / n_classes);
  for (int i = 0; i < total % n_classes; ++i) counts[static_cast<std::size_t>(i)]++;
  return counts;
}

}  // namespace

SynthResult synth_generate(const SynthConfig& config) {
  const SynthPlan plan = validate_synth_config(config);
  const int n_classes = static_cast<int>(plan.class_names.size());
  const std::vector<int> train_counts = split_counts(config.train_windows, n_classes);
  const std::vector<int> test_counts = split_counts(config.test_windows, n_classes);

  struct RawSplit {
    std::vector<Tensor> tables;  // active rows per class
    std::vector<int> counts;
  };
  RawSplit raw_train{{}, train_counts};
  RawSplit raw_test{{}, test_counts};

  for (int c = 0; c < n_classes; ++c) {
    const SynthFault* fault =
        c == 0 ? nullptr : &config.faults[static_cast<std::size_t>(c - 1)];
    for (RawSplit* split : {&raw_train, &raw_test}) {
      const int windows = split->counts[static_cast<std::size_t>(c)];
      const int rows = (windows - 1) * config.window_stride + config.window_width;
      const std::uint64_t seed = derive_seed(
          config.seed, static_cast<std::uint64_t>(c) * 2 +
                           (split == &raw_test ? 1 : 0));
      split->tables.push_back(generate_series(config, plan, fault, rows, seed));
    }
  }

  // Fit normalization on all training rows, apply everywhere.
  int train_rows = 0;
  for (const Tensor& t : raw_train.tables) train_rows += t.dim(0);
  Tensor train_table({train_rows, config.n_features});
  {
    double* dst = train_table.data();
    for (const Tensor& t : raw_train.tables) {
      std::copy(t.data(), t.data() + t.size(), dst);
      dst += t.size();
    }
  }
  const NormStats stats = fit_normalizer(train_table);

  SynthResult result;
  result.root_features.assign(static_cast<std::size_t>(n_classes), -1);
  for (int c = 1; c < n_classes; ++c) {
    result.root_features[static_cast<std::size_t>(c)] =
        config.faults[static_cast<std::size_t>(c - 1)].root_feature;
  }

  for (auto [split, dataset] : {std::pair{&raw_train, &result.train},
                                std::pair{&raw_test, &result.test}}) {
    dataset->class_names = plan.class_names;
    dataset->norm_stats = stats;
    for (int c = 0; c < n_classes; ++c) {
      const Tensor normalized =
          apply_normalizer(split->tables[static_cast<std::size_t>(c)], stats);
      std::vector<Tensor> windows =
          window_table(normalized, config.window_width, config.window_stride);
      const int expected = split->counts[static_cast<std::size_t>(c)];
      assert(static_cast<int>(windows.size()) >= expected);
      windows.resize(static_cast<std::size_t>(expected));
      for (Tensor& w : windows) {
        dataset->samples.push_back(std::move(w));
        dataset->labels.push_back(c);
      }
    }
  }
  return result;
}

}  // namespace hdlcnn
