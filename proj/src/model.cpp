#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rng.hpp"

namespace hdlcnn {

namespace {

// Rows [row_begin, row_end) of a [C, H, W] map as an own tensor.
Tensor slice_rows(const Tensor& x, int row_begin, int row_end) {
  const int c = x.dim(0);
  const int h = x.dim(1);
  const int w = x.dim(2);
  Tensor out({c, row_end - row_begin, w});
  const double* src = x.data();
  double* dst = out.data();
  for (int ch = 0; ch < c; ++ch) {
    const double* s = src + (static_cast<std::size_t>(ch) * h + row_begin) * w;
    double* d = dst + static_cast<std::size_t>(ch) * (row_end - row_begin) * w;
    std::copy(s, s + static_cast<std::size_t>(row_end - row_begin) * w, d);
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  const int c = a.dim(0);
  const int w = a.dim(2);
  if (b.dim(0) != c || b.dim(2) != w) {
    throw std::invalid_argument("cannot concatenate " + a.shape_string() +
                                " with " + b.shape_string() +
                                " along the feature axis");
  }
  const int ha = a.dim(1);
  const int hb = b.dim(1);
  Tensor out({c, ha + hb, w});
  const double* pa = a.data();
  const double* pb = b.data();
  double* dst = out.data();
  for (int ch = 0; ch < c; ++ch) {
    std::copy(pa + static_cast<std::size_t>(ch) * ha * w,
              pa + static_cast<std::size_t>(ch + 1) * ha * w,
              dst + static_cast<std::size_t>(ch) * (ha + hb) * w);
    std::copy(pb + static_cast<std::size_t>(ch) * hb * w,
              pb + static_cast<std::size_t>(ch + 1) * hb * w,
              dst + static_cast<std::size_t>(ch) * (ha + hb) * w +
                  static_cast<std::size_t>(ha) * w);
  }
  return out;
}

ConvSpec make_conv_spec(const ModelConfig& cfg, int in_channels, int out_channels) {
  ConvSpec spec;
  spec.in_channels = in_channels;
  spec.out_channels = out_channels;
  spec.kernel_h = cfg.kernel_h;
  spec.kernel_w = cfg.kernel_w;
  spec.stride = 1;
  spec.dilation = cfg.dilation;
  return spec;
}

LayerShapes resolve_shapes(const ModelConfig& cfg, const FeatureOrdering& ordering) {
  const int p = cfg.n_features;
  const int t = cfg.n_timesteps;
  const int m = ordering.boundary;
  const int extent_h = dilated_extent(cfg.kernel_h, cfg.dilation);
  const int extent_w = dilated_extent(cfg.kernel_w, cfg.dilation);

  if (m < 1 || m >= p) {
    throw std::invalid_argument("segment boundary " + std::to_string(m) +
                                " must lie strictly inside 1.." +
                                std::to_string(p - 1));
  }
  for (const auto [name, height] :
       {std::pair{"first", m}, std::pair{"second", p - m}}) {
    if (height < extent_h) {
      throw std::invalid_argument(
          std::string(name) + " segment height " + std::to_string(height) +
          " is below the dilated kernel extent " + std::to_string(extent_h));
    }
  }
  if (t < extent_w) {
    throw std::invalid_argument("timestep count " + std::to_string(t) +
                                " is below the dilated kernel extent " +
                                std::to_string(extent_w));
  }

  LayerShapes shapes;
  shapes.segment1 = {1, m, t};
  shapes.segment2 = {1, p - m, t};
  const int h1 = conv_output_size(m, cfg.kernel_h, 1, cfg.dilation);
  const int h2 = conv_output_size(p - m, cfg.kernel_h, 1, cfg.dilation);
  const int w1 = conv_output_size(t, cfg.kernel_w, 1, cfg.dilation);
  shapes.conv1_out1 = {cfg.conv1_channels, h1, w1};
  shapes.conv1_out2 = {cfg.conv1_channels, h2, w1};
  shapes.concat = {cfg.conv1_channels, h1 + h2, w1};

  if (h1 + h2 < extent_h) {
    throw std::invalid_argument(
        "second conv needs height >= " + std::to_string(extent_h) +
        ", concatenated feature map has " + std::to_string(h1 + h2));
  }
  if (w1 < extent_w) {
    throw std::invalid_argument(
        "second conv needs width >= " + std::to_string(extent_w) +
        ", feature map has " + std::to_string(w1));
  }
  const int h3 = conv_output_size(h1 + h2, cfg.kernel_h, 1, cfg.dilation);
  const int w3 = conv_output_size(w1, cfg.kernel_w, 1, cfg.dilation);
  shapes.conv2_out = {cfg.conv2_channels, h3, w3};

  if (h3 % cfg.pool_h != 0 || w3 % cfg.pool_w != 0) {
    throw std::invalid_argument(
        "pool " + std::to_string(cfg.pool_h) + "x" + std::to_string(cfg.pool_w) +
        " does not divide the conv output " + std::to_string(h3) + "x" +
        std::to_string(w3));
  }
  shapes.pool_out = {cfg.conv2_channels, h3 / cfg.pool_h, w3 / cfg.pool_w};
  shapes.flatten = cfg.conv2_channels * (h3 / cfg.pool_h) * (w3 / cfg.pool_w);
  shapes.output = cfg.n_classes;
  return shapes;
}

void check_model_config(const ModelConfig& cfg) {
  if (cfg.n_features < 2) {
    throw std::invalid_argument("model needs at least 2 features, got " +
                                std::to_string(cfg.n_features));
  }
  if (cfg.n_timesteps < 1) {
    throw std::invalid_argument("model needs at least 1 timestep");
  }
  if (cfg.n_classes < 2) {
    throw std::invalid_argument("model needs at least 2 classes, got " +
                                std::to_string(cfg.n_classes));
  }
  if (cfg.conv1_channels < 1 || cfg.conv2_channels < 1) {
    throw std::invalid_argument("channel counts must be positive");
  }
  if (cfg.kernel_h < 1 || cfg.kernel_w < 1 || cfg.dilation < 1 ||
      cfg.pool_h < 1 || cfg.pool_w < 1) {
    throw std::invalid_argument("kernel, dilation and pool sizes must be positive");
  }
}

}  // namespace

HdlcnnModel::HdlcnnModel(const ModelConfig& config, const FeatureOrdering& ordering)
    : config_(config),
      ordering_(ordering),
      shapes_((check_model_config(config),
               [&] {
                 std::vector<bool> seen(static_cast<std::size_t>(config.n_features), false);
                 if (static_cast<int>(ordering.permutation.size()) != config.n_features) {
                   throw std::invalid_argument(
                       "ordering permutation has " +
                       std::to_string(ordering.permutation.size()) +
                       " entries, model expects " + std::to_string(config.n_features));
                 }
                 for (int v : ordering.permutation) {
                   if (v < 0 || v >= config.n_features || seen[static_cast<std::size_t>(v)]) {
                     throw std::invalid_argument(
                         "ordering is not a permutation of 0.." +
                         std::to_string(config.n_features - 1));
                   }
                   seen[static_cast<std::size_t>(v)] = true;
                 }
                 return resolve_shapes(config, ordering);
               }())),
      conv1a_(make_conv_spec(config, 1, config.conv1_channels)),
      conv1b_(make_conv_spec(config, 1, config.conv1_channels)),
      conv2_(make_conv_spec(config, config.conv1_channels, config.conv2_channels)),
      fc_(shapes_.flatten, config.n_classes) {}

FeatureOrdering identity_ordering(int n_features) {
  FeatureOrdering ordering;
  ordering.permutation.resize(static_cast<std::size_t>(n_features));
  std::iota(ordering.permutation.begin(), ordering.permutation.end(), 0);
  ordering.boundary = n_features / 2;
  return ordering;
}

HdlcnnModel build_model(const ModelConfig& config, const FeatureOrdering& ordering) {
  HdlcnnModel model(config, ordering);
  // He-uniform init: kernels/weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)),
  // biases zero. Fill order is fixed so a seed pins every parameter.
  Rng rng(config.seed);
  for (auto& [name, param] : model.named_parameters()) {
    if (name.ends_with(".bias")) continue;
    int fan_in = 0;
    const std::vector<int>& shape = param->shape();
    if (shape.size() == 4) {
      fan_in = shape[1] * shape[2] * shape[3];
    } else {
      fan_in = shape[1];
    }
    const double limit = std::sqrt(6.0 / fan_in);
    for (double& v : param->values()) v = rng.uniform(-limit, limit);
  }
  return model;
}

void HdlcnnModel::check_sample(const Tensor& sample) const {
  if (sample.rank() != 3 || sample.dim(0) != 1 ||
      sample.dim(1) != config_.n_features || sample.dim(2) != config_.n_timesteps) {
    throw std::invalid_argument("sample shaped " + sample.shape_string() +
                                ", model expects (1, " +
                                std::to_string(config_.n_features) + ", " +
                                std::to_string(config_.n_timesteps) + ")");
  }
}

Tensor HdlcnnModel::forward(const Tensor& sample) {
  check_sample(sample);
  const int p = config_.n_features;
  const int t = config_.n_timesteps;
  const int m = ordering_.boundary;

  // Gather rows into the clustered order and split at the boundary.
  Tensor seg1({1, m, t});
  Tensor seg2({1, p - m, t});
  for (int k = 0; k < p; ++k) {
    const double* src =
        sample.data() + static_cast<std::size_t>(ordering_.permutation[static_cast<std::size_t>(k)]) * t;
    double* dst = k < m ? seg1.data() + static_cast<std::size_t>(k) * t
                        : seg2.data() + static_cast<std::size_t>(k - m) * t;
    std::copy(src, src + t, dst);
  }

  Tensor a1 = conv1a_.forward(seg1);
  Tensor a2 = conv1b_.forward(seg2);
  if (config_.activation == Activation::relu) {
    a1 = relu(a1, &relu1a_);
    a2 = relu(a2, &relu1b_);
  }
  Tensor cat = concat_rows(a1, a2);
  Tensor b = conv2_.forward(cat);
  if (config_.activation == Activation::relu) {
    b = relu(b, &relu2_);
  }
  Tensor pooled = max_pool2d(b, config_.pool_h, config_.pool_w, &pool_cache_);
  Tensor flat = pooled.reshaped({shapes_.flatten});
  return fc_.forward(flat);
}

Tensor HdlcnnModel::backward(const Tensor& grad_logits) {
  Tensor g = fc_.backward(grad_logits);
  g = g.reshaped(shapes_.pool_out);
  g = max_pool2d_backward(g, pool_cache_);
  if (config_.activation == Activation::relu) {
    g = relu_backward(g, relu2_);
  }
  g = conv2_.backward(g);

  const int h1 = shapes_.conv1_out1[1];
  const int h2 = shapes_.conv1_out2[1];
  Tensor g1 = slice_rows(g, 0, h1);
  Tensor g2 = slice_rows(g, h1, h1 + h2);
  if (config_.activation == Activation::relu) {
    g1 = relu_backward(g1, relu1a_);
    g2 = relu_backward(g2, relu1b_);
  }
  g1 = conv1a_.backward(g1);
  g2 = conv1b_.backward(g2);

  // Scatter segment gradients back to the original row order.
  const int p = config_.n_features;
  const int t = config_.n_timesteps;
  const int m = ordering_.boundary;
  Tensor grad_input({1, p, t});
  for (int k = 0; k < p; ++k) {
    const double* src = k < m ? g1.data() + static_cast<std::size_t>(k) * t
                              : g2.data() + static_cast<std::size_t>(k - m) * t;
    double* dst = grad_input.data() +
                  static_cast<std::size_t>(ordering_.permutation[static_cast<std::size_t>(k)]) * t;
    std::copy(src, src + t, dst);
  }
  return grad_input;
}

std::vector<Tensor*> HdlcnnModel::parameters() {
  return {&conv1a_.kernels, &conv1a_.bias, &conv1b_.kernels, &conv1b_.bias,
          &conv2_.kernels,  &conv2_.bias,  &fc_.weights,     &fc_.bias};
}

std::vector<Tensor*> HdlcnnModel::parameter_gradients() {
  return {&conv1a_.kernels_grad, &conv1a_.bias_grad, &conv1b_.kernels_grad,
          &conv1b_.bias_grad,    &conv2_.kernels_grad, &conv2_.bias_grad,
          &fc_.weights_grad,     &fc_.bias_grad};
}

std::vector<std::pair<std::string, const Tensor*>> HdlcnnModel::named_parameters() const {
  return {{"conv1a.kernels", &conv1a_.kernels}, {"conv1a.bias", &conv1a_.bias},
          {"conv1b.kernels", &conv1b_.kernels}, {"conv1b.bias", &conv1b_.bias},
          {"conv2.kernels", &conv2_.kernels},   {"conv2.bias", &conv2_.bias},
          {"fc.weights", &fc_.weights},         {"fc.bias", &fc_.bias}};
}

std::vector<std::pair<std::string, Tensor*>> HdlcnnModel::named_parameters() {
  return {{"conv1a.kernels", &conv1a_.kernels}, {"conv1a.bias", &conv1a_.bias},
          {"conv1b.kernels", &conv1b_.kernels}, {"conv1b.bias", &conv1b_.bias},
          {"conv2.kernels", &conv2_.kernels},   {"conv2.bias", &conv2_.bias},
          {"fc.weights", &fc_.weights},         {"fc.bias", &fc_.bias}};
}

void HdlcnnModel::mark_parameters_updated() {
  conv1a_.cache.valid = false;
  conv1b_.cache.valid = false;
  conv2_.cache.valid = false;
  fc_.cache.valid = false;
  relu1a_.valid = false;
  relu1b_.valid = false;
  relu2_.valid = false;
  pool_cache_.valid = false;
}

ForwardTrace HdlcnnModel::trace(const Tensor& sample) const {
  check_sample(sample);
  const int p = config_.n_features;
  const int t = config_.n_timesteps;
  const int m = ordering_.boundary;

  ForwardTrace tr;
  tr.seg1 = Tensor({1, m, t});
  tr.seg2 = Tensor({1, p - m, t});
  for (int k = 0; k < p; ++k) {
    const double* src =
        sample.data() + static_cast<std::size_t>(ordering_.permutation[static_cast<std::size_t>(k)]) * t;
    double* dst = k < m ? tr.seg1.data() + static_cast<std::size_t>(k) * t
                        : tr.seg2.data() + static_cast<std::size_t>(k - m) * t;
    std::copy(src, src + t, dst);
  }

  tr.conv1a_pre = dilated_conv2d(tr.seg1, conv1a_.spec, conv1a_.kernels, conv1a_.bias);
  tr.conv1b_pre = dilated_conv2d(tr.seg2, conv1b_.spec, conv1b_.kernels, conv1b_.bias);
  tr.act1a = config_.activation == Activation::relu ? relu(tr.conv1a_pre) : tr.conv1a_pre;
  tr.act1b = config_.activation == Activation::relu ? relu(tr.conv1b_pre) : tr.conv1b_pre;
  tr.concat = concat_rows(tr.act1a, tr.act1b);
  tr.conv2_pre = dilated_conv2d(tr.concat, conv2_.spec, conv2_.kernels, conv2_.bias);
  tr.act2 = config_.activation == Activation::relu ? relu(tr.conv2_pre) : tr.conv2_pre;
  tr.pooled = max_pool2d(tr.act2, config_.pool_h, config_.pool_w, &tr.pool_cache);
  tr.flat = tr.pooled.reshaped({shapes_.flatten});
  tr.logits = linear(tr.flat, fc_.weights, fc_.bias);
  return tr;
}

Tensor HdlcnnModel::logits(const Tensor& sample) const { return trace(sample).logits; }

Tensor HdlcnnModel::probabilities(const Tensor& sample) const {
  return softmax(logits(sample));
}

int HdlcnnModel::predict(const Tensor& sample) const {
  const Tensor scores = logits(sample);
  int best = 0;
  for (int k = 1; k < scores.dim(0); ++k) {
    if (scores[static_cast<std::size_t>(k)] > scores[static_cast<std::size_t>(best)]) {
      best = k;
    }
  }
  return best;
}

namespace {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
};

}  // namespace

TrainHistory train_model(HdlcnnModel& model, const Dataset& data,
                         const TrainConfig& config) {
  check_dataset(data);
  if (data.n_features() != model.config().n_features ||
      data.n_timesteps() != model.config().n_timesteps) {
    throw std::invalid_argument(
        "dataset samples are (1, " + std::to_string(data.n_features()) + ", " +
        std::to_string(data.n_timesteps()) + "), model expects (1, " +
        std::to_string(model.config().n_features) + ", " +
        std::to_string(model.config().n_timesteps) + ")");
  }
  if (data.n_classes() != model.config().n_classes) {
    throw std::invalid_argument("dataset has " + std::to_string(data.n_classes()) +
                                " classes, model expects " +
                                std::to_string(model.config().n_classes));
  }
  if (config.epochs < 1 || config.batch_size < 1) {
    throw std::invalid_argument("epochs and batch size must be positive");
  }
  if (config.learning_rate < 0.0) {
    throw std::invalid_argument("learning rate must be non-negative");
  }

  const int n = static_cast<int>(data.samples.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(config.shuffle_seed);

  const std::vector<Tensor*> params = model.parameters();
  const std::vector<Tensor*> grads = model.parameter_gradients();
  AdamState adam;
  if (config.optimizer == Optimizer::adam) {
    for (Tensor* p : params) {
      adam.m.emplace_back(p->shape());
      adam.v.emplace_back(p->shape());
    }
  }

  TrainHistory history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int correct = 0;

    for (int start = 0; start < n; start += config.batch_size) {
      const int end = std::min(n, start + config.batch_size);
      const double inv_batch = 1.0 / (end - start);
      model.zero_gradients();

      for (int i = start; i < end; ++i) {
        const int idx = order[static_cast<std::size_t>(i)];
        const Tensor logits = model.forward(data.samples[static_cast<std::size_t>(idx)]);
        const SoftmaxLoss sm =
            softmax_cross_entropy(logits, data.labels[static_cast<std::size_t>(idx)]);
        epoch_loss += sm.loss;
        int best = 0;
        for (int k = 1; k < logits.dim(0); ++k) {
          if (logits[static_cast<std::size_t>(k)] > logits[static_cast<std::size_t>(best)]) best = k;
        }
        if (best == data.labels[static_cast<std::size_t>(idx)]) ++correct;

        Tensor grad_logits = sm.grad_logits;
        for (double& g : grad_logits.values()) g *= inv_batch;
        model.backward(grad_logits);
      }

      if (config.optimizer == Optimizer::adam) {
        ++adam.step;
        const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam.step));
        const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam.step));
        for (std::size_t p = 0; p < params.size(); ++p) {
          Tensor& param = *params[p];
          const Tensor& grad = *grads[p];
          Tensor& m = adam.m[p];
          Tensor& v = adam.v[p];
          for (std::size_t i = 0; i < param.size(); ++i) {
            const double g = grad[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            param[i] -= config.learning_rate * (m[i] / bc1) /
                        (std::sqrt(v[i] / bc2) + config.epsilon);
          }
        }
      } else {
        for (std::size_t p = 0; p < params.size(); ++p) {
          Tensor& param = *params[p];
          const Tensor& grad = *grads[p];
          for (std::size_t i = 0; i < param.size(); ++i) {
            param[i] -= config.learning_rate * grad[i];
          }
        }
      }
      model.mark_parameters_updated();
    }

    history.loss.push_back(epoch_loss / n);
    history.accuracy.push_back(static_cast<double>(correct) / n);
  }
  return history;
}

Metrics evaluate(const HdlcnnModel& model, const Dataset& data) {
  check_dataset(data);
  const int k = model.config().n_classes;
  if (data.n_classes() != k) {
    throw std::invalid_argument("dataset has " + std::to_string(data.n_classes()) +
                                " classes, model expects " + std::to_string(k));
  }

  Metrics metrics;
  metrics.n_samples = static_cast<int>(data.samples.size());
  metrics.confusion.assign(static_cast<std::size_t>(k),
                           std::vector<int>(static_cast<std::size_t>(k), 0));
  int correct = 0;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const int predicted = model.predict(data.samples[i]);
    const int truth = data.labels[i];
    metrics.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)]++;
    if (predicted == truth) ++correct;
  }
  metrics.accuracy = static_cast<double>(correct) / metrics.n_samples;
  for (int c = 0; c < k; ++c) {
    int row_total = 0;
    for (int j = 0; j < k; ++j) row_total += metrics.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
    metrics.per_class_accuracy.push_back(
        row_total == 0 ? -1.0
                       : static_cast<double>(metrics.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)]) /
                             row_total);
  }
  return metrics;
}

}  // namespace hdlcnn
