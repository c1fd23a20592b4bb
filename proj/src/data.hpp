#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clustering.hpp"
#include "tensor.hpp"

namespace hdlcnn {

// ---------------------------------------------------------------------------
// Tabular series: rows are timesteps, columns are sensors.
// ---------------------------------------------------------------------------

struct Table {
  std::vector<std::string> column_names;
  Tensor values;  // [n_rows, n_cols]
};

// First line is the header. Cells must parse as decimal numbers; diagnostics
// name the offending cell with 1-based (data row, column) coordinates.
Table parse_csv(const std::string& text, const std::string& origin);
Table load_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Per-feature min-max scaling, fit on one set and applied unclamped to
// others. A constant column (max == min) is flagged degenerate and maps to 0.
// ---------------------------------------------------------------------------

struct NormStats {
  std::vector<double> min;
  std::vector<double> max;
  std::vector<bool> degenerate;
};

NormStats fit_normalizer(const Tensor& table);                    // [n, p]
Tensor apply_normalizer(const Tensor& table, const NormStats& stats);

// ---------------------------------------------------------------------------
// Windowing: consecutive row blocks of `width` at the given stride become
// model samples shaped [1, p, width] (feature rows, time columns). A
// trailing partial window is dropped.
// ---------------------------------------------------------------------------

std::vector<Tensor> window_table(const Tensor& table, int width, int stride);

// ---------------------------------------------------------------------------
// Labeled sample collection, the unit the model and explainer consume.
// Samples keep the source column order; the model applies its own feature
// ordering internally.
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<Tensor> samples;  // each [1, n_features, n_timesteps]
  std::vector<int> labels;
  std::vector<std::string> class_names;
  NormStats norm_stats;

  int n_features() const;
  int n_timesteps() const;
  int n_classes() const { return static_cast<int>(class_names.size()); }
};

void check_dataset(const Dataset& dataset);

// Feature columns for clustering, rebuilt by concatenating every sample's
// time axis: [n_samples * n_timesteps, n_features]. With stride = width this
// reproduces the normalized source table.
Tensor feature_matrix(const Dataset& dataset);

// Presentation permutation: new feature k is old feature perm[k]. Used to
// study sensitivity to the input column arrangement.
Dataset permute_features(const Dataset& dataset, const std::vector<int>& perm);

// ---------------------------------------------------------------------------
// Synthetic fault benchmark: per feature an AR(1) process driven by
// block-correlated innovations; each fault class plants a disturbance at one
// root feature from its onset onward, attenuated toward same-block features.
// ---------------------------------------------------------------------------

struct SynthBlock {
  std::vector<int> features;
  double correlation = 0.0;  // innovation correlation inside the block
};

struct SynthFault {
  std::string name;
  int root_feature = 0;
  double onset_fraction = 0.3;      // lead-in share of the generated series
  double mean_shift = 0.0;          // in units of the feature's stationary std
  double variance_multiplier = 1.0; // innovation std scale at the root
  double propagation = 0.0;         // disturbance attenuation within the block
};

struct SynthConfig {
  int n_features = 12;
  std::vector<SynthBlock> blocks;
  std::vector<double> ar_coefficients;  // per feature, |a| < 1
  std::vector<SynthFault> faults;
  int train_windows = 600;  // totals across all classes
  int test_windows = 300;
  int window_width = 20;
  int window_stride = 20;
  std::uint64_t seed = 0;
};

// Two blocks of 6 at rho 0.9, AR 0.8, one 3-sigma mean-shift fault and one
// 3x variance fault (plus the normal class).
SynthConfig default_synth_config();

struct SynthResult {
  Dataset train;
  Dataset test;
  std::vector<int> root_features;  // per class; -1 for the normal class
};

// Deterministic for a fixed config (the config seed drives every draw).
// Normalization is fit on the training windows and applied to both splits.
SynthResult synth_generate(const SynthConfig& config);

}  // namespace hdlcnn
