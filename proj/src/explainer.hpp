#pragma once

#include <functional>
#include <vector>

#include "model.hpp"
#include "tensor.hpp"

namespace hdlcnn {

// Attribution of one model output (the pre-softmax logit of a target class)
// to the input cells, relative to a reference input. Every explanation
// satisfies summation-to-delta: sum of contributions equals
// output - reference_output (checked at construction, tolerance 1e-5).

struct Explanation {
  int sample_index = -1;  // caller-assigned bookkeeping
  int target_class = 0;
  Tensor contributions;      // [n_features, n_timesteps], original row order
  double output = 0.0;           // target logit at the sample
  double reference_output = 0.0; // target logit at the reference (or mean over backgrounds)
};

// Shapley values of an additive model f(x) = beta0 + sum_i beta_i x_i:
//   phi_i = beta_i * (x_i - mean_i).
std::vector<double> linear_shap(const std::vector<double>& beta, double beta0,
                                const std::vector<double>& x,
                                const std::vector<double>& means);

// Exact Shapley values by full subset enumeration. Players are disjoint
// groups of flat cell indices into x; cells outside every group stay at the
// reference. At most 20 players (2^n evaluations).
std::vector<double> exact_shapley(
    const std::function<double(const Tensor&)>& f, const Tensor& x,
    const Tensor& reference, const std::vector<std::vector<int>>& players);

// Backward multiplier propagation through the model: linear rule for conv
// and fully connected layers, rescale rule for relu (local-gradient fallback
// when |delta input| < 1e-7), winner routing through max pooling (the real
// input's argmax takes the whole delta).
Explanation deeplift_attribute(const HdlcnnModel& model, const Tensor& sample,
                               const Tensor& reference, int target_class);

// DeepLIFT averaged over a background sample set; approximates Shapley
// values and matches them exactly for linear networks.
Explanation deep_shap(const HdlcnnModel& model, const Tensor& sample,
                      const std::vector<Tensor>& background, int target_class);

// Seeded draw of up to `size` samples of one class, the usual reference set
// for deep_shap (all of them when the class has fewer).
std::vector<Tensor> draw_background(const Dataset& data, int class_index,
                                    int size, std::uint64_t seed);

enum class Aggregation { signed_mean, mean_abs };

struct GlobalImportance {
  std::vector<double> phi;  // per original feature
  Aggregation aggregation = Aggregation::mean_abs;
  int target_class = 0;
  int n_samples = 0;
};

// Per-feature importance over a population: each sample's contribution map is
// summed over time, then averaged across samples (signed), or averaged after
// taking absolute values (mean_abs).
GlobalImportance global_importance(const std::vector<Explanation>& explanations,
                                   Aggregation aggregation);

struct RootCause {
  int feature = 0;           // argmax of phi; ties resolve to the lowest index
  std::vector<int> ranking;  // all features, most important first
};

RootCause root_cause(const GlobalImportance& importance);

}  // namespace hdlcnn
