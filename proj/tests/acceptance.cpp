// Acceptance gate: ten end-to-end correctness criteria, one [PASS]/[FAIL]
// line each on stdout, nonzero exit when any fails. Progress notes for the
// long-running phases go to stderr. Tolerances are pinned here, next to the
// checks that use them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "clustering.hpp"
#include "data.hpp"
#include "explainer.hpp"
#include "io.hpp"
#include "model.hpp"
#include "ops.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace hdlcnn;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Small shared helpers.
// ---------------------------------------------------------------------------

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Tensor random_tensor(const std::vector<int>& shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  if (a.size() != b.size()) worst = 1e300;
  return worst;
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return values[values.size() / 2];
}

std::string join_problems(const std::vector<std::string>& problems) {
  std::ostringstream out;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    if (i > 0) out << "; ";
    out << problems[i];
  }
  return out.str();
}

// Failure collector: a criterion keeps running after the first miss so that
// its summary names everything wrong at once.
struct Checker {
  std::vector<std::string> problems;
  void expect(bool condition, const std::string& message) {
    if (!condition) problems.push_back(message);
  }
  bool ok() const { return problems.empty(); }
};

std::string format_value(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.6g", v);
  return buffer;
}

// ---------------------------------------------------------------------------
// Criterion 1: analytic gradients against central finite differences.
// ---------------------------------------------------------------------------

bool criterion_gradients(std::string& detail) {
  const auto start = Clock::now();
  Checker c;

  ModelConfig config;  // 22 features, 20 steps, 11 classes, 16/32 channels
  config.seed = 2024;
  HdlcnnModel model = build_model(config, identity_ordering(config.n_features));
  Rng rng(501);
  const Tensor input =
      random_tensor({1, config.n_features, config.n_timesteps}, rng);
  const double full_error = grad_check(model, input, 1e-5);
  c.expect(full_error < 1e-4, "full-network gradient error " +
                                  format_value(full_error) + " >= 1e-4");

  // Pure-linear units: central differences are exact up to rounding noise of
  // about 1e-11, so every gradient coordinate must stay away from zero.
  // Single-output layers with values in +/-[0.3, 1.0] guarantee that: each
  // coordinate is a plain product, never a cancelling sum.
  auto conditioned = [&rng](Tensor* tensor) {
    for (std::size_t i = 0; i < tensor->size(); ++i) {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      tensor->data()[i] = sign * rng.uniform(0.3, 1.0);
    }
  };
  LinearLayer fc(8, 1);
  for (Tensor* p : fc.parameters()) conditioned(p);
  Tensor fc_input({8});
  conditioned(&fc_input);
  double linear_error = grad_check(fc, fc_input, 1e-5);

  Sequential flat_linear;
  flat_linear.add(std::make_unique<FlattenLayer>());
  auto inner = std::make_unique<LinearLayer>(12, 1);
  for (Tensor* p : inner->parameters()) conditioned(p);
  flat_linear.add(std::move(inner));
  Tensor seq_input({3, 2, 2});
  conditioned(&seq_input);
  linear_error = std::max(linear_error, grad_check(flat_linear, seq_input, 1e-5));

  c.expect(linear_error < 1e-9, "linear-layer gradient error " +
                                    format_value(linear_error) + " >= 1e-9");

  const double elapsed = seconds_since(start);
  c.expect(elapsed < 60.0,
           "took " + format_value(elapsed) + " s, limit 60 s");

  detail = c.ok() ? "full " + format_value(full_error) + ", linear " +
                        format_value(linear_error) + ", " +
                        format_value(elapsed) + " s"
                  : join_problems(c.problems);
  return c.ok();
}

// ---------------------------------------------------------------------------
// Criterion 2: dilated convolution equals its two plain-convolution
// reformulations on 100 random cases each, within 1e-12.
// ---------------------------------------------------------------------------

Tensor plain_conv2d_oracle(const Tensor& input, int out_channels, int kh,
                           int kw, const Tensor& kernels, const Tensor& bias) {
  const int in_channels = input.dim(0);
  const int oh = input.dim(1) - kh + 1;
  const int ow = input.dim(2) - kw + 1;
  Tensor out({out_channels, oh, ow});
  for (int co = 0; co < out_channels; ++co) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        double acc = bias[static_cast<std::size_t>(co)];
        for (int ci = 0; ci < in_channels; ++ci) {
          for (int a = 0; a < kh; ++a) {
            for (int b = 0; b < kw; ++b) {
              acc += kernels.at(co, ci, a, b) * input.at(ci, i + a, j + b);
            }
          }
        }
        out.at(co, i, j) = acc;
      }
    }
  }
  return out;
}

Tensor zero_inserted_kernel(const Tensor& kernels, int dilation) {
  const int co = kernels.dim(0);
  const int ci = kernels.dim(1);
  const int kh = kernels.dim(2);
  const int kw = kernels.dim(3);
  Tensor out({co, ci, dilated_extent(kh, dilation), dilated_extent(kw, dilation)});
  for (int o = 0; o < co; ++o) {
    for (int i = 0; i < ci; ++i) {
      for (int a = 0; a < kh; ++a) {
        for (int b = 0; b < kw; ++b) {
          out.at(o, i, a * dilation, b * dilation) = kernels.at(o, i, a, b);
        }
      }
    }
  }
  return out;
}

bool criterion_conv_equivalences(std::string& detail) {
  Checker c;
  Rng rng(502);
  double worst_plain = 0.0;
  double worst_inserted = 0.0;

  for (int trial = 0; trial < 100; ++trial) {
    const int ci = 1 + rng.uniform_int(3);
    const int co = 1 + rng.uniform_int(3);
    const int kh = 1 + rng.uniform_int(3);
    const int kw = 1 + rng.uniform_int(3);
    const int dilation = 1 + rng.uniform_int(3);
    const int eh = dilated_extent(kh, dilation);
    const int ew = dilated_extent(kw, dilation);
    const int h = eh + rng.uniform_int(4);
    const int w = ew + rng.uniform_int(4);
    const Tensor input = random_tensor({ci, h, w}, rng);
    const Tensor kernels = random_tensor({co, ci, kh, kw}, rng);
    const Tensor bias = random_tensor({co}, rng);

    ConvSpec spec;
    spec.in_channels = ci;
    spec.out_channels = co;
    spec.kernel_h = kh;
    spec.kernel_w = kw;

    // Dilation 1 against the direct textbook transcription.
    spec.dilation = 1;
    const Tensor plain = dilated_conv2d(input, spec, kernels, bias);
    worst_plain = std::max(
        worst_plain,
        max_abs_diff(plain, plain_conv2d_oracle(input, co, kh, kw, kernels, bias)));

    // Any dilation against the zero-inserted plain kernel.
    spec.dilation = dilation;
    const Tensor dilated = dilated_conv2d(input, spec, kernels, bias);
    const Tensor inserted = zero_inserted_kernel(kernels, dilation);
    const Tensor via_plain =
        plain_conv2d_oracle(input, co, eh, ew, inserted, bias);
    worst_inserted = std::max(worst_inserted, max_abs_diff(dilated, via_plain));
  }

  c.expect(worst_plain <= 1e-12, "dilation-1 mismatch " + format_value(worst_plain));
  c.expect(worst_inserted <= 1e-12,
           "zero-insertion mismatch " + format_value(worst_inserted));
  detail = c.ok() ? "100 cases each, worst " + format_value(worst_plain) +
                        " / " + format_value(worst_inserted)
                  : join_problems(c.problems);
  return c.ok();
}

// ---------------------------------------------------------------------------
// Criterion 3: receptive-field recurrence equals the measured perturbation
// cone on 20 random stacks, exactly.
// ---------------------------------------------------------------------------

int perturbation_cone_extent(const std::vector<RfLayer>& layers, bool* runnable,
                             const std::vector<bool>& is_pool) {
  const int rf = receptive_field_size(layers, 1);
  for (int width = rf; width < rf + 256; ++width) {
    int current = width;
    bool ok = true;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const RfLayer& layer = layers[l];
      if (is_pool[l]) {
        if (current % layer.kernel != 0) {
          ok = false;
          break;
        }
        current /= layer.kernel;
      } else {
        const int extent = dilated_extent(layer.kernel, layer.dilation);
        if (current < extent) {
          ok = false;
          break;
        }
        current = (current - extent) / layer.stride + 1;
      }
      if (current < 1) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;

    auto run = [&](const Tensor& input) {
      Tensor x = input;
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const RfLayer& layer = layers[l];
        if (is_pool[l]) {
          x = max_pool2d(x, 1, layer.kernel);
        } else {
          ConvSpec spec;
          spec.in_channels = 1;
          spec.out_channels = 1;
          spec.kernel_h = 1;
          spec.kernel_w = layer.kernel;
          spec.stride = layer.stride;
          spec.dilation = layer.dilation;
          const Tensor ones = Tensor::full({1, 1, 1, layer.kernel}, 1.0);
          x = dilated_conv2d(x, spec, ones, Tensor({1}));
        }
      }
      return x.at(0, 0, 0);
    };

    const double base = run(Tensor({1, 1, width}));
    int lo = -1, hi = -1;
    for (int j = 0; j < width; ++j) {
      Tensor input({1, 1, width});
      input.at(0, 0, j) = 1.0;
      if (run(input) != base) {
        if (lo < 0) lo = j;
        hi = j;
      }
    }
    *runnable = true;
    return lo < 0 ? 0 : hi - lo + 1;
  }
  *runnable = false;
  return -1;
}

bool criterion_receptive_field(std::string& detail) {
  Checker c;
  Rng rng(503);
  for (int trial = 0; trial < 20; ++trial) {
    const int depth = 1 + rng.uniform_int(3);
    std::vector<RfLayer> layers;
    std::vector<bool> is_pool;
    for (int l = 0; l < depth; ++l) {
      RfLayer layer;
      const bool pool = l > 0 && rng.uniform() < 0.25;
      if (pool) {
        layer.kernel = 2;
        layer.stride = 2;
        layer.dilation = 1;
      } else {
        layer.kernel = 1 + rng.uniform_int(4);
        layer.stride = 1 + rng.uniform_int(2);
        layer.dilation = 1 + rng.uniform_int(3);
      }
      layers.push_back(layer);
      is_pool.push_back(pool);
    }
    bool runnable = false;
    const int cone = perturbation_cone_extent(layers, &runnable, is_pool);
    const int predicted = receptive_field_size(layers, 1);
    c.expect(runnable, "trial " + std::to_string(trial) + ": no runnable width");
    c.expect(cone == predicted,
             "trial " + std::to_string(trial) + ": cone " + std::to_string(cone) +
                 " != predicted " + std::to_string(predicted));
  }
  detail = c.ok() ? "20 random stacks, exact" : join_problems(c.problems);
  return c.ok();
}

// ---------------------------------------------------------------------------
// Criterion 4: Ward merge sequences equal the naive re-scan oracle exactly;
// column permutations leave the 2-cluster membership sets unchanged.
// ---------------------------------------------------------------------------

Dendrogram naive_ward_oracle(const Tensor& features) {
  const int p = features.dim(1);
  std::map<int, int> sizes;
  std::map<std::pair<int, int>, double> dist;
  for (int i = 0; i < p; ++i) sizes[i] = 1;
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      dist[{i, j}] = euclidean_distance(features, i, j);
    }
  }
  auto lookup = [&](int a, int b) {
    return dist.at({std::min(a, b), std::max(a, b)});
  };

  Dendrogram out;
  out.n_leaves = p;
  int next_id = p;
  while (sizes.size() > 1) {
    int best_a = -1, best_b = -1;
    double best_d = 0.0;
    for (auto it_a = sizes.begin(); it_a != sizes.end(); ++it_a) {
      for (auto it_b = std::next(it_a); it_b != sizes.end(); ++it_b) {
        const double d = lookup(it_a->first, it_b->first);
        if (best_a < 0 || d < best_d ||
            (d == best_d && (it_a->first < best_a ||
                             (it_a->first == best_a && it_b->first < best_b)))) {
          best_a = it_a->first;
          best_b = it_b->first;
          best_d = d;
        }
      }
    }
    const int size_i = sizes.at(best_a);
    const int size_j = sizes.at(best_b);
    std::vector<int> others;
    for (const auto& [id, size] : sizes) {
      if (id != best_a && id != best_b) others.push_back(id);
    }
    for (int t : others) {
      dist[{std::min(t, next_id), std::max(t, next_id)}] =
          ward_update(lookup(t, best_a), lookup(t, best_b), best_d, sizes.at(t),
                      size_i, size_j);
    }
    sizes.erase(best_a);
    sizes.erase(best_b);
    sizes[next_id] = size_i + size_j;
    out.steps.push_back({best_a, best_b, best_d, size_i + size_j});
    ++next_id;
  }
  return out;
}

std::set<std::set<int>> membership_sets(const std::vector<std::vector<int>>& cut) {
  std::set<std::set<int>> out;
  for (const auto& cluster : cut) out.insert({cluster.begin(), cluster.end()});
  return out;
}

Tensor permute_columns(const Tensor& matrix, const std::vector<int>& perm) {
  const int n = matrix.dim(0);
  const int p = matrix.dim(1);
  Tensor out({n, p});
  for (int row = 0; row < n; ++row) {
    for (int k = 0; k < p; ++k) {
      out.at(row, k) = matrix.at(row, perm[static_cast<std::size_t>(k)]);
    }
  }
  return out;
}

bool criterion_ward(std::string& detail) {
  Checker c;
  Rng rng(504);

  for (int trial = 0; trial < 50; ++trial) {
    const int p = 2 + rng.uniform_int(7);  // 2..8
    const int n = 4 + rng.uniform_int(9);
    Tensor m({n, p});
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-2.0, 2.0);

    const Dendrogram got = ward_linkage(m);
    const Dendrogram want = naive_ward_oracle(m);
    bool equal = got.n_leaves == want.n_leaves &&
                 got.steps.size() == want.steps.size();
    for (std::size_t s = 0; equal && s < got.steps.size(); ++s) {
      equal = got.steps[s].id_a == want.steps[s].id_a &&
              got.steps[s].id_b == want.steps[s].id_b &&
              got.steps[s].size == want.steps[s].size &&
              got.steps[s].distance == want.steps[s].distance;
    }
    c.expect(equal, "oracle mismatch on trial " + std::to_string(trial) +
                        " (p=" + std::to_string(p) + ")");
  }

  for (int trial = 0; trial < 20; ++trial) {
    const int p = 3 + rng.uniform_int(6);  // 3..8
    const int n = 6 + rng.uniform_int(7);
    Tensor m({n, p});
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-2.0, 2.0);
    std::vector<int> perm(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm);

    const auto base = membership_sets(cut_to_k(ward_linkage(m), 2));
    const auto permuted_cut = cut_to_k(ward_linkage(permute_columns(m, perm)), 2);
    std::set<std::set<int>> mapped;
    for (const auto& cluster : permuted_cut) {
      std::set<int> originals;
      for (int k : cluster) originals.insert(perm[static_cast<std::size_t>(k)]);
      mapped.insert(originals);
    }
    c.expect(mapped == base,
             "permutation changed memberships on trial " + std::to_string(trial));
  }

  detail = c.ok() ? "50 oracle matches, 20 permutation trials"
                  : join_problems(c.problems);
  return c.ok();
}

// ---------------------------------------------------------------------------
// Criterion 5: the reference architecture reproduces every intermediate
// shape: (16,7,16) x2 -> (16,14,16) -> (32,10,12) -> (32,5,6) -> 960 -> 11.
// ---------------------------------------------------------------------------

bool criterion_shapes(std::string& detail) {
  Checker c;
  ModelConfig config;  // defaults are the reference architecture
  HdlcnnModel model = build_model(config, identity_ordering(config.n_features));
  const LayerShapes& s = model.layer_shapes();

  auto expect_shape = [&](const std::vector<int>& got,
                          const std::vector<int>& want, const char* name) {
    c.expect(got == want, std::string(name) + " is " + shape_string(got) +
                              ", expected " + shape_string(want));
  };
  expect_shape(s.segment1, {1, 11, 20}, "segment1");
  expect_shape(s.segment2, {1, 11, 20}, "segment2");
  expect_shape(s.conv1_out1, {16, 7, 16}, "conv1_out1");
  expect_shape(s.conv1_out2, {16, 7, 16}, "conv1_out2");
  expect_shape(s.concat, {16, 14, 16}, "concat");
  expect_shape(s.conv2_out, {32, 10, 12}, "conv2_out");
  expect_shape(s.pool_out, {32, 5, 6}, "pool_out");
  c.expect(s.flatten == 960, "flatten is " + std::to_string(s.flatten));
  c.expect(s.output == 11, "output is " + std::to_string(s.output));

  // The ledger must describe the live network, not just the plan.
  Rng rng(505);
  const ForwardTrace trace =
      model.trace(random_tensor({1, config.n_features, config.n_timesteps}, rng));
  expect_shape(trace.act1a.shape(), {16, 7, 16}, "live act1a");
  expect_shape(trace.concat.shape(), {16, 14, 16}, "live concat");
  expect_shape(trace.act2.shape(), {32, 10, 12}, "live act2");
  expect_shape(trace.pooled.shape(), {32, 5, 6}, "live pooled");
  c.expect(static_cast<int>(trace.flat.size()) == 960,
           "live flatten is " + std::to_string(trace.flat.size()));
  c.expect(static_cast<int>(trace.logits.size()) == 11,
           "live output is " + std::to_string(trace.logits.size()));

  detail = c.ok() ? "(16,7,16)x2 -> (16,14,16) -> (32,10,12) -> (32,5,6) -> 960 -> 11"
                  : join_problems(c.problems);
  return c.ok();
}

// ---------------------------------------------------------------------------
// Criterion 6: attribution identities. Summation-to-delta on 100 random
// (model, sample, class) triples within 1e-5; agreement of the three routes
// on activation-free networks within 1e-8; dummy and symmetry axioms.
// ---------------------------------------------------------------------------

ModelConfig random_valid_config(Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    ModelConfig config;
    config.n_features = 4 + 2 * rng.uniform_int(3);  // 4, 6, 8
    config.n_timesteps = 6 + rng.uniform_int(7);
    config.n_classes = 2 + rng.uniform_int(3);
    config.conv1_channels = 2 + rng.uniform_int(3);
    config.conv2_channels = 2 + rng.uniform_int(3);
    config.kernel_h = 2;
    config.kernel_w = 2;
    config.dilation = 1 + rng.uniform_int(2);
    config.pool_h = 1 + rng.uniform_int(2);
    config.pool_w = 1 + rng.uniform_int(2);
    config.activation = rng.uniform() < 0.5 ? Activation::relu : Activation::none;
    config.seed = rng.next_u64();
    try {
      build_model(config, identity_ordering(config.n_features));
      return config;
    } catch (const std::invalid_argument&) {
      continue;  // shape constraints rejected this draw
    }
  }
  throw std::runtime_error("no valid random architecture found");
}

std::vector<double> effective_weights(const HdlcnnModel& model, int target) {
  const ModelConfig& config = model.config();
  const Tensor zero({1, config.n_features, config.n_timesteps});
  const double base = model.logits(zero)[static_cast<std::size_t>(target)];
  std::vector<double> w(zero.size());
  for (std::size_t i = 0; i < zero.size(); ++i) {
    Tensor probe = zero;
    probe.data()[i] = 1.0;
    w[i] = model.logits(probe)[static_cast<std::size_t>(target)] - base;
  }
  return w;
}

bool criterion_attribution(std::string& detail) {
  Checker c;
  Rng rng(506);

  // Summation-to-delta across random architectures, inputs and targets.
  double worst_delta = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ModelConfig config = random_valid_config(rng);
    const HdlcnnModel model =
        build_model(config, identity_ordering(config.n_features));
    const Tensor sample =
        random_tensor({1, config.n_features, config.n_timesteps}, rng, -1.5, 1.5);
    const Tensor reference =
        random_tensor({1, config.n_features, config.n_timesteps}, rng, -1.5, 1.5);
    const int target = rng.uniform_int(config.n_classes);
    const Explanation e = deeplift_attribute(model, sample, reference, target);
    double total = 0.0;
    for (std::size_t i = 0; i < e.contributions.size(); ++i) {
      total += e.contributions[i];
    }
    worst_delta =
        std::max(worst_delta, std::abs(total - (e.output - e.reference_output)));
    const double logit = model.logits(sample)[static_cast<std::size_t>(target)];
    c.expect(std::abs(e.output - logit) <= 1e-12,
             "trial " + std::to_string(trial) + ": output differs from logit");
  }
  c.expect(worst_delta <= 1e-5,
           "summation-to-delta worst " + format_value(worst_delta) + " > 1e-5");

  // Activation-free model: backward attribution, the additive closed form and
  // full enumeration must coincide.
  double worst_linear = 0.0;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    ModelConfig config;
    config.n_features = 6;
    config.n_timesteps = 8;
    config.n_classes = 3;
    config.conv1_channels = 3;
    config.conv2_channels = 4;
    config.kernel_h = 2;
    config.kernel_w = 2;
    config.dilation = 1;
    config.pool_h = 1;
    config.pool_w = 1;
    config.activation = Activation::none;
    config.seed = seed;
    const HdlcnnModel model =
        build_model(config, identity_ordering(config.n_features));
    const Tensor x =
        random_tensor({1, config.n_features, config.n_timesteps}, rng);
    const Tensor ref =
        random_tensor({1, config.n_features, config.n_timesteps}, rng);

    for (int target = 0; target < config.n_classes; ++target) {
      const std::vector<double> weights = effective_weights(model, target);
      const double base = model.logits(Tensor(x.shape()))[
          static_cast<std::size_t>(target)];
      const std::vector<double> closed_form = linear_shap(
          weights, base, std::vector<double>(x.values()),
          std::vector<double>(ref.values()));

      const Explanation e = deeplift_attribute(model, x, ref, target);
      for (std::size_t i = 0; i < e.contributions.size(); ++i) {
        worst_linear = std::max(
            worst_linear, std::abs(e.contributions[i] - closed_form[i]));
      }

      std::vector<std::vector<int>> players(
          static_cast<std::size_t>(config.n_features));
      for (int f = 0; f < config.n_features; ++f) {
        for (int tau = 0; tau < config.n_timesteps; ++tau) {
          players[static_cast<std::size_t>(f)].push_back(
              f * config.n_timesteps + tau);
        }
      }
      const auto shapley = exact_shapley(
          [&](const Tensor& t) {
            return model.logits(t)[static_cast<std::size_t>(target)];
          },
          x, ref, players);
      for (int f = 0; f < config.n_features; ++f) {
        double row = 0.0;
        for (int tau = 0; tau < config.n_timesteps; ++tau) {
          row += e.contributions.at(f, tau);
        }
        worst_linear = std::max(
            worst_linear, std::abs(row - shapley[static_cast<std::size_t>(f)]));
      }
    }
  }
  c.expect(worst_linear <= 1e-8, "linear-route disagreement " +
                                     format_value(worst_linear) + " > 1e-8");

  // Dummy axiom: a feature whose only kernel path is zero attributes exactly
  // zero. Kernel height equals segment height, so kernel row 1 of the first
  // branch is original feature 1's only multiplier.
  for (Activation activation : {Activation::relu, Activation::none}) {
    ModelConfig config;
    config.n_features = 4;
    config.n_timesteps = 8;
    config.n_classes = 2;
    config.conv1_channels = 3;
    config.conv2_channels = 3;
    config.kernel_h = 2;
    config.kernel_w = 2;
    config.dilation = 1;
    config.pool_h = 1;
    config.pool_w = 1;
    config.activation = activation;
    config.seed = 41;
    HdlcnnModel model = build_model(config, identity_ordering(4));
    for (auto& [name, tensor] : model.named_parameters()) {
      if (name != "conv1a.kernels") continue;
      for (int co = 0; co < tensor->dim(0); ++co) {
        for (int b = 0; b < tensor->dim(3); ++b) {
          tensor->at(co, 0, 1, b) = 0.0;
        }
      }
    }
    model.mark_parameters_updated();
    const Tensor sample =
        random_tensor({1, config.n_features, config.n_timesteps}, rng);
    const Tensor reference =
        random_tensor({1, config.n_features, config.n_timesteps}, rng);
    const Explanation e = deeplift_attribute(model, sample, reference, 1);
    for (int tau = 0; tau < config.n_timesteps; ++tau) {
      c.expect(e.contributions.at(1, tau) == 0.0,
               "dummy feature attribution nonzero at step " + std::to_string(tau));
    }
  }

  // Symmetry axiom: interchangeable players earn equal shares.
  const auto symmetric = [](const Tensor& t) {
    return t[0] + t[1] + 3.0 * t[0] * t[1];
  };
  const auto sym = exact_shapley(symmetric, Tensor({2}, {1.5, 1.5}), Tensor({2}),
                                 {{0}, {1}});
  c.expect(std::abs(sym[0] - sym[1]) <= 1e-10, "symmetric players differ");

  detail = c.ok() ? "delta worst " + format_value(worst_delta) +
                        ", linear routes worst " + format_value(worst_linear)
                  : join_problems(c.problems);
  return c.ok();
}

// ---------------------------------------------------------------------------
// Shared pipeline phase for criteria 7-10: full runs of the default
// synthetic benchmark across seeds, in both feature presentations.
// ---------------------------------------------------------------------------

struct SeedRun {
  double close_accuracy = 0.0;
  double close_final_train_accuracy = 0.0;
  double close_seconds = 0.0;
  double separate_accuracy = -1.0;  // seeds 0..4 only
  bool memberships_match = false;   // seeds 0..4 only
  bool root_hit[2] = {false, false};
};

struct PipelinePhase {
  std::vector<SeedRun> runs;
  std::vector<int> planted_roots;  // per class, -1 for normal
  std::string seed0_model_path;
  std::optional<HdlcnnModel> seed0_model;
  std::optional<Dataset> seed0_test;
  std::string error;
};

FeatureOrdering cluster_ordering(const Dataset& train, Dendrogram* dendrogram) {
  const Dendrogram dendro = ward_linkage(feature_matrix(train));
  if (dendrogram != nullptr) *dendrogram = dendro;
  return reorder_features(cut_to_k(dendro, 2));
}

ModelConfig pipeline_model_config(const Dataset& train, std::uint64_t seed) {
  ModelConfig config;
  config.n_features = train.n_features();
  config.n_timesteps = train.n_timesteps();
  config.n_classes = train.n_classes();
  config.conv1_channels = 16;
  config.conv2_channels = 32;
  config.kernel_h = 2;
  config.kernel_w = 2;
  config.dilation = 2;
  config.pool_h = 2;
  config.pool_w = 2;
  config.activation = Activation::relu;
  config.seed = seed;
  return config;
}

HdlcnnModel train_pipeline_model(const Dataset& train,
                                 const FeatureOrdering& ordering,
                                 std::uint64_t seed, double* final_train_acc) {
  HdlcnnModel model = build_model(pipeline_model_config(train, seed + 1), ordering);
  TrainConfig tc;  // 30 epochs, batch 32, Adam 1e-3
  tc.shuffle_seed = seed + 2;
  const TrainHistory history = train_model(model, train, tc);
  if (final_train_acc != nullptr) {
    *final_train_acc = history.accuracy.empty() ? 0.0 : history.accuracy.back();
  }
  return model;
}

// First `cap` samples of one class, in dataset order.
std::vector<int> class_sample_indices(const Dataset& data, int label, int cap) {
  std::vector<int> indices;
  for (int i = 0; i < static_cast<int>(data.samples.size()); ++i) {
    if (data.labels[static_cast<std::size_t>(i)] == label) {
      indices.push_back(i);
      if (static_cast<int>(indices.size()) == cap) break;
    }
  }
  return indices;
}

int diagnose_root(const HdlcnnModel& model, const Dataset& train,
                  const Dataset& test, int fault_class, std::uint64_t seed) {
  const std::vector<Tensor> background = draw_background(train, 0, 100, seed + 3);
  std::vector<Explanation> explanations;
  for (int index : class_sample_indices(test, fault_class, 30)) {
    explanations.push_back(deep_shap(
        model, test.samples[static_cast<std::size_t>(index)], background,
        fault_class));
  }
  const GlobalImportance importance =
      global_importance(explanations, Aggregation::mean_abs);
  return root_cause(importance).feature;
}

PipelinePhase run_pipeline_phase() {
  PipelinePhase phase;
  try {
    // Interleaves the two correlated blocks: 0,6,1,7,... so that block mates
    // sit maximally far apart in the presented row order.
    SynthConfig probe = default_synth_config();
    const int p = probe.n_features;
    std::vector<int> separate_perm;
    for (int i = 0; i < p / 2; ++i) {
      separate_perm.push_back(i);
      separate_perm.push_back(p / 2 + i);
    }

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::fprintf(stderr, "pipeline phase: seed %llu of 10\n",
                   static_cast<unsigned long long>(seed + 1));
      SynthConfig config = default_synth_config();
      config.seed = seed;
      const SynthResult result = synth_generate(config);
      if (phase.planted_roots.empty()) phase.planted_roots = result.root_features;

      SeedRun run;
      const auto start = Clock::now();
      Dendrogram close_dendro;
      const FeatureOrdering close_ordering =
          cluster_ordering(result.train, &close_dendro);
      HdlcnnModel model = train_pipeline_model(
          result.train, close_ordering, seed, &run.close_final_train_accuracy);
      run.close_accuracy = evaluate(model, result.test).accuracy;
      run.close_seconds = seconds_since(start);

      for (int fault_class = 1; fault_class <= 2; ++fault_class) {
        const int diagnosed =
            diagnose_root(model, result.train, result.test, fault_class, seed);
        run.root_hit[fault_class - 1] =
            diagnosed ==
            result.root_features[static_cast<std::size_t>(fault_class)];
      }

      if (seed < 5) {
        const Dataset train_sep = permute_features(result.train, separate_perm);
        const Dataset test_sep = permute_features(result.test, separate_perm);
        Dendrogram sep_dendro;
        const FeatureOrdering sep_ordering =
            cluster_ordering(train_sep, &sep_dendro);

        // Map the separate-presentation clusters back to original ids.
        const auto close_sets = membership_sets(cut_to_k(close_dendro, 2));
        std::set<std::set<int>> mapped;
        for (const auto& cluster : cut_to_k(sep_dendro, 2)) {
          std::set<int> originals;
          for (int k : cluster) {
            originals.insert(separate_perm[static_cast<std::size_t>(k)]);
          }
          mapped.insert(originals);
        }
        run.memberships_match = mapped == close_sets;

        const HdlcnnModel sep_model =
            train_pipeline_model(train_sep, sep_ordering, seed, nullptr);
        run.separate_accuracy = evaluate(sep_model, test_sep).accuracy;
      }

      if (seed == 0) {
        phase.seed0_model.emplace(std::move(model));
        phase.seed0_test = result.test;
      }
      phase.runs.push_back(run);
    }
  } catch (const std::exception& e) {
    phase.error = e.what();
  }
  return phase;
}

// ---------------------------------------------------------------------------
// Criterion 7: default synthetic 3-class run reaches >= 0.90 test accuracy
// within 30 epochs, < 5 min per run, median over 5 seeds. Final training
// accuracy stays >= 0.95 (regression bound).
// ---------------------------------------------------------------------------

bool criterion_end_to_end(const PipelinePhase& phase, std::string& detail) {
  if (!phase.error.empty()) {
    detail = "pipeline phase failed: " + phase.error;
    return false;
  }
  Checker c;
  std::vector<double> accuracies;
  std::vector<double> train_accuracies;
  for (int seed = 0; seed < 5; ++seed) {
    const SeedRun& run = phase.runs[static_cast<std::size_t>(seed)];
    accuracies.push_back(run.close_accuracy);
    train_accuracies.push_back(run.close_final_train_accuracy);
    c.expect(run.close_seconds < 300.0,
             "seed " + std::to_string(seed) + " took " +
                 format_value(run.close_seconds) + " s, limit 300 s");
  }
  const double med = median(accuracies);
  const double med_train = median(train_accuracies);
  c.expect(med >= 0.90, "median test accuracy " + format_value(med) + " < 0.90");
  c.expect(med_train >= 0.95,
           "median final train accuracy " + format_value(med_train) + " < 0.95");

  std::ostringstream per_seed;
  for (double a : accuracies) per_seed << ' ' << format_value(a);
  detail = (c.ok() ? "median test accuracy " + format_value(med) +
                         ", per seed:" + per_seed.str()
                   : join_problems(c.problems));
  return c.ok();
}

// ---------------------------------------------------------------------------
// Criterion 8: close- vs separate-correlated presentation differs by at most
// 2 accuracy points (median over 5 seeds) and clustering recovers identical
// membership sets under both.
// ---------------------------------------------------------------------------

bool criterion_order_sensitivity(const PipelinePhase& phase, std::string& detail) {
  if (!phase.error.empty()) {
    detail = "pipeline phase failed: " + phase.error;
    return false;
  }
  Checker c;
  std::vector<double> close, separate;
  for (int seed = 0; seed < 5; ++seed) {
    const SeedRun& run = phase.runs[static_cast<std::size_t>(seed)];
    close.push_back(run.close_accuracy);
    separate.push_back(run.separate_accuracy);
    c.expect(run.memberships_match,
             "seed " + std::to_string(seed) + ": membership sets differ");
  }
  const double gap = std::abs(median(close) - median(separate));
  c.expect(gap <= 0.02, "median accuracy gap " + format_value(gap) + " > 0.02");
  detail = c.ok() ? "median gap " + format_value(gap) + " (close " +
                        format_value(median(close)) + ", separate " +
                        format_value(median(separate)) + "), memberships identical"
                  : join_problems(c.problems);
  return c.ok();
}

// ---------------------------------------------------------------------------
// Criterion 9: the planted root feature is diagnosed in >= 8 of 10 seeded
// runs for both fault classes.
// ---------------------------------------------------------------------------

bool criterion_root_cause(const PipelinePhase& phase, std::string& detail) {
  if (!phase.error.empty()) {
    detail = "pipeline phase failed: " + phase.error;
    return false;
  }
  Checker c;
  int hits[2] = {0, 0};
  for (const SeedRun& run : phase.runs) {
    for (int f = 0; f < 2; ++f) hits[f] += run.root_hit[f] ? 1 : 0;
  }
  c.expect(hits[0] >= 8, "mean-shift fault root found in only " +
                             std::to_string(hits[0]) + "/10 runs");
  c.expect(hits[1] >= 8, "variance fault root found in only " +
                             std::to_string(hits[1]) + "/10 runs");
  detail = c.ok() ? "mean-shift " + std::to_string(hits[0]) + "/10, variance " +
                        std::to_string(hits[1]) + "/10 (planted roots " +
                        std::to_string(phase.planted_roots[1]) + ", " +
                        std::to_string(phase.planted_roots[2]) + ")"
                  : join_problems(c.problems);
  return c.ok();
}

// ---------------------------------------------------------------------------
// Criterion 10: repeating the seeded pipeline reproduces the model file byte
// for byte; save/load round trips are bit-exact and preserve metrics.
// ---------------------------------------------------------------------------

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

bool criterion_determinism(const PipelinePhase& phase, std::string& detail) {
  if (!phase.error.empty() || !phase.seed0_model.has_value()) {
    detail = "pipeline phase failed: " + phase.error;
    return false;
  }
  Checker c;
  const fs::path dir =
      fs::temp_directory_path() / "hdlcnn_acceptance_determinism";
  fs::create_directories(dir);

  // Independent rerun of the whole seed-0 pipeline.
  SynthConfig config = default_synth_config();
  config.seed = 0;
  const SynthResult rerun = synth_generate(config);
  const FeatureOrdering ordering = cluster_ordering(rerun.train, nullptr);
  const HdlcnnModel retrained =
      train_pipeline_model(rerun.train, ordering, 0, nullptr);

  const HdlcnnModel& original = *phase.seed0_model;
  const auto params_a = original.named_parameters();
  const auto params_b = retrained.named_parameters();
  bool identical = params_a.size() == params_b.size();
  for (std::size_t i = 0; identical && i < params_a.size(); ++i) {
    identical = params_a[i].first == params_b[i].first &&
                params_a[i].second->values() == params_b[i].second->values();
  }
  c.expect(identical, "retrained parameters differ from the first run");

  const std::string path_a = (dir / "model_a.bin").string();
  const std::string path_b = (dir / "model_b.bin").string();
  save_model(original, path_a);
  save_model(retrained, path_b);
  c.expect(read_bytes(path_a) == read_bytes(path_b),
           "model files differ between runs");

  // Round trip: parameters, predictions and metrics all survive bit-exactly.
  const HdlcnnModel loaded = load_model(path_a);
  const auto params_l = loaded.named_parameters();
  bool loaded_identical = params_a.size() == params_l.size();
  for (std::size_t i = 0; loaded_identical && i < params_a.size(); ++i) {
    loaded_identical = params_a[i].first == params_l[i].first &&
                       params_a[i].second->values() == params_l[i].second->values();
  }
  c.expect(loaded_identical, "loaded parameters differ from the saved model");

  const Dataset& test = *phase.seed0_test;
  for (int i = 0; i < 5 && i < static_cast<int>(test.samples.size()); ++i) {
    const Tensor a = original.logits(test.samples[static_cast<std::size_t>(i)]);
    const Tensor b = loaded.logits(test.samples[static_cast<std::size_t>(i)]);
    c.expect(a.values() == b.values(),
             "logits differ after round trip on sample " + std::to_string(i));
  }

  const Metrics metrics_a = evaluate(original, test);
  const Metrics metrics_l = evaluate(loaded, test);
  c.expect(metrics_a.accuracy == metrics_l.accuracy &&
               metrics_a.confusion == metrics_l.confusion &&
               metrics_a.per_class_accuracy == metrics_l.per_class_accuracy,
           "metrics differ after round trip");

  detail = c.ok() ? "byte-identical model files, bit-exact round trip"
                  : join_problems(c.problems);
  return c.ok();
}

}  // namespace

int main() {
  int failures = 0;
  int index = 0;
  auto report = [&](const std::string& label,
                    const std::function<bool(std::string&)>& fn) {
    ++index;
    std::string detail;
    bool pass = false;
    try {
      pass = fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("unexpected exception: ") + e.what();
    }
    std::printf("[%s] %2d. %s%s%s\n", pass ? "PASS" : "FAIL", index,
                label.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  };

  report("gradient correctness (finite differences)", criterion_gradients);
  report("dilated convolution equivalences", criterion_conv_equivalences);
  report("receptive field equals perturbation cone", criterion_receptive_field);
  report("ward clustering matches the naive oracle", criterion_ward);
  report("reference architecture shape ledger", criterion_shapes);
  report("attribution identities", criterion_attribution);

  std::fprintf(stderr, "running the shared pipeline phase (15 trainings)...\n");
  const PipelinePhase phase = run_pipeline_phase();

  report("synthetic end-to-end accuracy", [&](std::string& d) {
    return criterion_end_to_end(phase, d);
  });
  report("feature-order sensitivity", [&](std::string& d) {
    return criterion_order_sensitivity(phase, d);
  });
  report("planted root-cause recovery", [&](std::string& d) {
    return criterion_root_cause(phase, d);
  });
  report("determinism and persistence", [&](std::string& d) {
    return criterion_determinism(phase, d);
  });

  if (failures > 0) {
    std::printf("%d of 10 criteria failed\n", failures);
    return 1;
  }
  std::printf("all 10 criteria passed\n");
  return 0;
}
