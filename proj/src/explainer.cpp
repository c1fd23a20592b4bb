#include "explainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "rng.hpp"

namespace hdlcnn {

namespace {

constexpr double kRescaleThreshold = 1e-7;
constexpr double kIdentityTolerance = 1e-5;

// Rescale rule for relu: multiplier = delta_out / delta_in, falling back to
// the local gradient when the input barely moved.
Tensor rescale_multipliers(const Tensor& m_out, const Tensor& pre_x,
                           const Tensor& pre_r) {
  Tensor m = m_out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double dx = pre_x[i] - pre_r[i];
    double mult;
    if (std::fabs(dx) < kRescaleThreshold) {
      mult = pre_x[i] > 0.0 ? 1.0 : 0.0;
    } else {
      const double dy = std::max(pre_x[i], 0.0) - std::max(pre_r[i], 0.0);
      mult = dy / dx;
    }
    m[i] *= mult;
  }
  return m;
}

// Winner routing through max pooling: the real input's argmax cell carries
// the whole output delta (multiplier dout/din, which is exactly 1 whenever
// the winner is stable). When the winner's own delta is smaller than the
// output delta — the reference's winner sat elsewhere in the window — that
// ratio amplifies arbitrarily, so the delta is instead spread over the
// window's changed cells proportionally to their own deltas. Both branches
// keep multipliers bounded by 1 (max pooling is 1-Lipschitz) and credit
// amounts that sum to the output change exactly.
Tensor pool_multipliers(const Tensor& m_out, const Tensor& act_x,
                        const Tensor& act_r, const Tensor& pooled_x,
                        const Tensor& pooled_r, const PoolCache& cache) {
  Tensor m_in(act_x.shape());
  const int h = act_x.dim(1);
  const int w = act_x.dim(2);
  const int out_h = pooled_x.dim(1);
  const int out_w = pooled_x.dim(2);
  const int pool_h = h / out_h;
  const int pool_w = w / out_w;
  std::size_t o = 0;
  for (int ch = 0; ch < pooled_x.dim(0); ++ch) {
    for (int i = 0; i < out_h; ++i) {
      for (int j = 0; j < out_w; ++j, ++o) {
        const std::size_t winner = cache.argmax[o];
        const double din = act_x[winner] - act_r[winner];
        const double dout = pooled_x[o] - pooled_r[o];
        if (din == 0.0 && dout == 0.0) {
          m_in[winner] += m_out[o];
          continue;
        }
        if (std::fabs(din) >= std::fabs(dout)) {
          m_in[winner] += m_out[o] * (dout / din);
          continue;
        }
        double sum_sq = 0.0;
        for (int a = 0; a < pool_h; ++a) {
          for (int b = 0; b < pool_w; ++b) {
            const std::size_t idx =
                (static_cast<std::size_t>(ch) * h + i * pool_h + a) * w +
                static_cast<std::size_t>(j) * pool_w + b;
            const double d = act_x[idx] - act_r[idx];
            sum_sq += d * d;
          }
        }
        for (int a = 0; a < pool_h; ++a) {
          for (int b = 0; b < pool_w; ++b) {
            const std::size_t idx =
                (static_cast<std::size_t>(ch) * h + i * pool_h + a) * w +
                static_cast<std::size_t>(j) * pool_w + b;
            const double d = act_x[idx] - act_r[idx];
            if (d != 0.0) m_in[idx] += m_out[o] * dout * d / sum_sq;
          }
        }
      }
    }
  }
  return m_in;
}

Tensor slice_rows(const Tensor& x, int row_begin, int row_end) {
  const int c = x.dim(0);
  const int h = x.dim(1);
  const int w = x.dim(2);
  Tensor out({c, row_end - row_begin, w});
  for (int ch = 0; ch < c; ++ch) {
    const double* src = x.data() + (static_cast<std::size_t>(ch) * h + row_begin) * w;
    std::copy(src, src + static_cast<std::size_t>(row_end - row_begin) * w,
              out.data() + static_cast<std::size_t>(ch) * (row_end - row_begin) * w);
  }
  return out;
}

Explanation make_explanation(int target_class, Tensor contributions,
                             double output, double reference_output) {
  double total = 0.0;
  for (double c : contributions.values()) total += c;
  const double delta = output - reference_output;
  if (std::fabs(total - delta) > kIdentityTolerance) {
    throw std::runtime_error(
        "attribution identity violated: contributions sum to " +
        std::to_string(total) + ", output delta is " + std::to_string(delta));
  }
  Explanation explanation;
  explanation.target_class = target_class;
  explanation.contributions = std::move(contributions);
  explanation.output = output;
  explanation.reference_output = reference_output;
  return explanation;
}

}  // namespace

std::vector<double> linear_shap(const std::vector<double>& beta, double /*beta0*/,
                                const std::vector<double>& x,
                                const std::vector<double>& means) {
  if (beta.size() != x.size() || beta.size() != means.size()) {
    throw std::invalid_argument(
        "linear_shap sizes disagree: " + std::to_string(beta.size()) +
        " coefficients, " + std::to_string(x.size()) + " inputs, " +
        std::to_string(means.size()) + " means");
  }
  std::vector<double> phi(beta.size());
  for (std::size_t i = 0; i < beta.size(); ++i) {
    phi[i] = beta[i] * (x[i] - means[i]);
  }
  return phi;
}

std::vector<double> exact_shapley(
    const std::function<double(const Tensor&)>& f, const Tensor& x,
    const Tensor& reference, const std::vector<std::vector<int>>& players) {
  if (!shapes_equal(x, reference)) {
    throw std::invalid_argument("sample shaped " + x.shape_string() +
                                ", reference shaped " + reference.shape_string());
  }
  const int n = static_cast<int>(players.size());
  if (n < 1 || n > 20) {
    throw std::invalid_argument("exact enumeration supports 1..20 players, got " +
                                std::to_string(n));
  }
  std::vector<bool> taken(x.size(), false);
  for (const auto& group : players) {
    if (group.empty()) {
      throw std::invalid_argument("player groups must be non-empty");
    }
    for (int idx : group) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= x.size() ||
          taken[static_cast<std::size_t>(idx)]) {
        throw std::invalid_argument(
            "player groups must hold disjoint cell indices inside 0.." +
            std::to_string(x.size() - 1));
      }
      taken[static_cast<std::size_t>(idx)] = true;
    }
  }

  // v(S) for every coalition; cells outside all groups stay at the reference.
  const std::size_t n_masks = std::size_t{1} << n;
  std::vector<double> value(n_masks);
  Tensor probe = reference;
  for (std::size_t mask = 0; mask < n_masks; ++mask) {
    for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = reference[i];
    for (int i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) {
        for (int idx : players[static_cast<std::size_t>(i)]) {
          probe[static_cast<std::size_t>(idx)] = x[static_cast<std::size_t>(idx)];
        }
      }
    }
    value[mask] = f(probe);
  }

  // Coalition weights |S|! (n-|S|-1)! / n! = 1 / (n * C(n-1, |S|)).
  std::vector<double> binom(static_cast<std::size_t>(n), 1.0);
  for (int s = 1; s < n; ++s) {
    binom[static_cast<std::size_t>(s)] =
        binom[static_cast<std::size_t>(s - 1)] * (n - s) / s;
  }
  std::vector<double> weight(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    weight[static_cast<std::size_t>(s)] = 1.0 / (n * binom[static_cast<std::size_t>(s)]);
  }

  std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
  for (std::size_t mask = 0; mask < n_masks; ++mask) {
    const int size = std::popcount(mask);
    for (int i = 0; i < n; ++i) {
      const std::size_t bit = std::size_t{1} << i;
      if (mask & bit) continue;
      phi[static_cast<std::size_t>(i)] +=
          weight[static_cast<std::size_t>(size)] * (value[mask | bit] - value[mask]);
    }
  }
  return phi;
}

Explanation deeplift_attribute(const HdlcnnModel& model, const Tensor& sample,
                               const Tensor& reference, int target_class) {
  if (!shapes_equal(sample, reference)) {
    throw std::invalid_argument("sample shaped " + sample.shape_string() +
                                ", reference shaped " + reference.shape_string());
  }
  const ModelConfig& cfg = model.config();
  if (target_class < 0 || target_class >= cfg.n_classes) {
    throw std::invalid_argument("target class " + std::to_string(target_class) +
                                " out of range for " +
                                std::to_string(cfg.n_classes) + " classes");
  }

  const ForwardTrace tx = model.trace(sample);
  const ForwardTrace tr = model.trace(reference);
  const LayerShapes& shapes = model.layer_shapes();

  // Linear rule through the classifier head: only the target row survives.
  const Tensor& w = model.fc().weights;
  Tensor m_flat({shapes.flatten});
  for (int j = 0; j < shapes.flatten; ++j) {
    m_flat[static_cast<std::size_t>(j)] = w.at(target_class, j);
  }

  Tensor m = m_flat.reshaped(shapes.pool_out);
  m = pool_multipliers(m, tx.act2, tr.act2, tx.pooled, tr.pooled, tx.pool_cache);
  if (cfg.activation == Activation::relu) {
    m = rescale_multipliers(m, tx.conv2_pre, tr.conv2_pre);
  }
  m = conv2d_input_adjoint(m, model.conv2().spec, model.conv2().kernels,
                           shapes.concat);

  const int h1 = shapes.conv1_out1[1];
  const int h2 = shapes.conv1_out2[1];
  Tensor m1 = slice_rows(m, 0, h1);
  Tensor m2 = slice_rows(m, h1, h1 + h2);
  if (cfg.activation == Activation::relu) {
    m1 = rescale_multipliers(m1, tx.conv1a_pre, tr.conv1a_pre);
    m2 = rescale_multipliers(m2, tx.conv1b_pre, tr.conv1b_pre);
  }
  m1 = conv2d_input_adjoint(m1, model.conv1a().spec, model.conv1a().kernels,
                            shapes.segment1);
  m2 = conv2d_input_adjoint(m2, model.conv1b().spec, model.conv1b().kernels,
                            shapes.segment2);

  // Undo the internal reordering; contributions live in original row order.
  const int p = cfg.n_features;
  const int t = cfg.n_timesteps;
  const int boundary = model.ordering().boundary;
  Tensor contributions({p, t});
  for (int k = 0; k < p; ++k) {
    const int orig = model.ordering().permutation[static_cast<std::size_t>(k)];
    const double* mult = k < boundary
                             ? m1.data() + static_cast<std::size_t>(k) * t
                             : m2.data() + static_cast<std::size_t>(k - boundary) * t;
    for (int tau = 0; tau < t; ++tau) {
      const std::size_t cell = static_cast<std::size_t>(orig) * t + tau;
      contributions.at(orig, tau) = mult[tau] * (sample[cell] - reference[cell]);
    }
  }

  const double output = tx.logits[static_cast<std::size_t>(target_class)];
  const double reference_output = tr.logits[static_cast<std::size_t>(target_class)];
  return make_explanation(target_class, std::move(contributions), output,
                          reference_output);
}

Explanation deep_shap(const HdlcnnModel& model, const Tensor& sample,
                      const std::vector<Tensor>& background, int target_class) {
  if (background.empty()) {
    throw std::invalid_argument("background sample set is empty");
  }
  Tensor mean_contrib({model.config().n_features, model.config().n_timesteps});
  double mean_ref = 0.0;
  double output = 0.0;
  for (const Tensor& reference : background) {
    const Explanation single =
        deeplift_attribute(model, sample, reference, target_class);
    for (std::size_t i = 0; i < mean_contrib.size(); ++i) {
      mean_contrib[i] += single.contributions[i];
    }
    mean_ref += single.reference_output;
    output = single.output;
  }
  const double inv = 1.0 / static_cast<double>(background.size());
  for (double& v : mean_contrib.values()) v *= inv;
  mean_ref *= inv;
  return make_explanation(target_class, std::move(mean_contrib), output, mean_ref);
}

std::vector<Tensor> draw_background(const Dataset& data, int class_index,
                                    int size, std::uint64_t seed) {
  check_dataset(data);
  if (class_index < 0 || class_index >= data.n_classes()) {
    throw std::invalid_argument("background class " + std::to_string(class_index) +
                                " out of range for " +
                                std::to_string(data.n_classes()) + " classes");
  }
  if (size < 1) {
    throw std::invalid_argument("background size must be positive");
  }
  std::vector<int> candidates;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (data.labels[i] == class_index) candidates.push_back(static_cast<int>(i));
  }
  if (candidates.empty()) {
    throw std::invalid_argument("dataset has no samples of class " +
                                std::to_string(class_index));
  }
  if (static_cast<int>(candidates.size()) > size) {
    Rng rng(seed);
    rng.shuffle(candidates);
    candidates.resize(static_cast<std::size_t>(size));
    std::sort(candidates.begin(), candidates.end());
  }
  std::vector<Tensor> background;
  background.reserve(candidates.size());
  for (int idx : candidates) {
    background.push_back(data.samples[static_cast<std::size_t>(idx)]);
  }
  return background;
}

GlobalImportance global_importance(const std::vector<Explanation>& explanations,
                                   Aggregation aggregation) {
  if (explanations.empty()) {
    throw std::invalid_argument("no explanations to aggregate");
  }
  const Tensor& first = explanations.front().contributions;
  const int p = first.dim(0);
  const int t = first.dim(1);

  GlobalImportance importance;
  importance.aggregation = aggregation;
  importance.target_class = explanations.front().target_class;
  importance.n_samples = static_cast<int>(explanations.size());
  importance.phi.assign(static_cast<std::size_t>(p), 0.0);

  for (const Explanation& e : explanations) {
    if (e.contributions.dim(0) != p || e.contributions.dim(1) != t) {
      throw std::invalid_argument("explanation contribution shapes disagree: " +
                                  e.contributions.shape_string() + " vs " +
                                  first.shape_string());
    }
    if (e.target_class != importance.target_class) {
      throw std::invalid_argument("explanations target different classes");
    }
    for (int f = 0; f < p; ++f) {
      double row = 0.0;
      for (int tau = 0; tau < t; ++tau) row += e.contributions.at(f, tau);
      importance.phi[static_cast<std::size_t>(f)] +=
          aggregation == Aggregation::mean_abs ? std::fabs(row) : row;
    }
  }
  for (double& v : importance.phi) v /= importance.n_samples;
  return importance;
}

RootCause root_cause(const GlobalImportance& importance) {
  if (importance.phi.empty()) {
    throw std::invalid_argument("importance vector is empty");
  }
  RootCause result;
  result.ranking.resize(importance.phi.size());
  std::iota(result.ranking.begin(), result.ranking.end(), 0);
  std::sort(result.ranking.begin(), result.ranking.end(), [&](int a, int b) {
    const double pa = importance.phi[static_cast<std::size_t>(a)];
    const double pb = importance.phi[static_cast<std::size_t>(b)];
    if (pa != pb) return pa > pb;
    return a < b;  // ties: lowest feature index first
  });
  result.feature = result.ranking.front();
  return result;
}

}  // namespace hdlcnn
