#include "ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "rng.hpp"

namespace hdlcnn {

int dilated_extent(int kernel, int dilation) {
  return dilation * (kernel - 1) + 1;
}

int conv_output_size(int input, int kernel, int stride, int dilation) {
  if (kernel <= 0 || stride <= 0 || dilation <= 0) {
    throw std::invalid_argument("kernel, stride and dilation must be positive");
  }
  const int extent = dilated_extent(kernel, dilation);
  if (extent > input) {
    throw std::invalid_argument(
        "dilated kernel extent " + std::to_string(extent) +
        " exceeds input extent " + std::to_string(input));
  }
  return (input - extent) / stride + 1;
}

namespace {

void check_conv_args(const Tensor& input, const ConvSpec& spec,
                     const Tensor& kernels, const Tensor& bias) {
  if (input.rank() != 3) {
    throw std::invalid_argument("conv input must be rank 3 [C, H, W], got " +
                                input.shape_string());
  }
  if (kernels.rank() != 4) {
    throw std::invalid_argument(
        "conv kernels must be rank 4 [C_out, C_in, kh, kw], got " +
        kernels.shape_string());
  }
  if (input.dim(0) != spec.in_channels) {
    throw std::invalid_argument(
        "conv input has " + std::to_string(input.dim(0)) +
        " channels, spec expects " + std::to_string(spec.in_channels));
  }
  if (kernels.dim(0) != spec.out_channels || kernels.dim(1) != spec.in_channels ||
      kernels.dim(2) != spec.kernel_h || kernels.dim(3) != spec.kernel_w) {
    throw std::invalid_argument(
        "conv kernels shaped " + kernels.shape_string() + ", spec expects (" +
        std::to_string(spec.out_channels) + ", " +
        std::to_string(spec.in_channels) + ", " + std::to_string(spec.kernel_h) +
        ", " + std::to_string(spec.kernel_w) + ")");
  }
  if (bias.rank() != 1 || bias.dim(0) != spec.out_channels) {
    throw std::invalid_argument("conv bias shaped " + bias.shape_string() +
                                ", spec expects (" +
                                std::to_string(spec.out_channels) + ")");
  }
}

}  // namespace

Tensor dilated_conv2d(const Tensor& input, const ConvSpec& spec,
                      const Tensor& kernels, const Tensor& bias,
                      ConvCache* cache) {
  check_conv_args(input, spec, kernels, bias);
  const int c_in = spec.in_channels;
  const int c_out = spec.out_channels;
  const int h = input.dim(1);
  const int w = input.dim(2);
  const int out_h = conv_output_size(h, spec.kernel_h, spec.stride, spec.dilation);
  const int out_w = conv_output_size(w, spec.kernel_w, spec.stride, spec.dilation);

  Tensor out({c_out, out_h, out_w});
  const double* x = input.data();
  const double* k = kernels.data();
  double* y = out.data();
  const int s = spec.stride;
  const int r = spec.dilation;

  for (int co = 0; co < c_out; ++co) {
    for (int i = 0; i < out_h; ++i) {
      for (int j = 0; j < out_w; ++j) {
        double acc = bias[static_cast<std::size_t>(co)];
        for (int ci = 0; ci < c_in; ++ci) {
          const double* x_ch = x + static_cast<std::size_t>(ci) * h * w;
          const double* k_ch = k + (static_cast<std::size_t>(co) * c_in + ci) *
                                       spec.kernel_h * spec.kernel_w;
          for (int a = 0; a < spec.kernel_h; ++a) {
            const double* x_row = x_ch + static_cast<std::size_t>(i * s + r * a) * w +
                                  j * s;
            const double* k_row = k_ch + static_cast<std::size_t>(a) * spec.kernel_w;
            for (int b = 0; b < spec.kernel_w; ++b) {
              acc += k_row[b] * x_row[static_cast<std::size_t>(r) * b];
            }
          }
        }
        y[(static_cast<std::size_t>(co) * out_h + i) * out_w + j] = acc;
      }
    }
  }

  if (cache != nullptr) {
    cache->input = input;
    cache->valid = true;
  }
  return out;
}

ConvGrads dilated_conv2d_backward(const Tensor& grad_output,
                                  const ConvCache& cache, const ConvSpec& spec,
                                  const Tensor& kernels) {
  if (!cache.valid) {
    throw std::runtime_error("conv backward called without a forward cache");
  }
  const Tensor& input = cache.input;
  const int c_in = spec.in_channels;
  const int c_out = spec.out_channels;
  const int h = input.dim(1);
  const int w = input.dim(2);
  const int out_h = conv_output_size(h, spec.kernel_h, spec.stride, spec.dilation);
  const int out_w = conv_output_size(w, spec.kernel_w, spec.stride, spec.dilation);
  if (grad_output.rank() != 3 || grad_output.dim(0) != c_out ||
      grad_output.dim(1) != out_h || grad_output.dim(2) != out_w) {
    throw std::invalid_argument("conv grad_output shaped " +
                                grad_output.shape_string() + ", expected (" +
                                std::to_string(c_out) + ", " +
                                std::to_string(out_h) + ", " +
                                std::to_string(out_w) + ")");
  }

  ConvGrads grads;
  grads.input = Tensor(input.shape());
  grads.kernels = Tensor(kernels.shape());
  grads.bias = Tensor({c_out});

  const double* x = input.data();
  const double* k = kernels.data();
  const double* gy = grad_output.data();
  double* gx = grads.input.data();
  double* gk = grads.kernels.data();
  double* gb = grads.bias.data();
  const int s = spec.stride;
  const int r = spec.dilation;

  for (int co = 0; co < c_out; ++co) {
    for (int i = 0; i < out_h; ++i) {
      for (int j = 0; j < out_w; ++j) {
        const double g = gy[(static_cast<std::size_t>(co) * out_h + i) * out_w + j];
        if (g == 0.0) continue;
        gb[co] += g;
        for (int ci = 0; ci < c_in; ++ci) {
          const std::size_t x_ch = static_cast<std::size_t>(ci) * h * w;
          const std::size_t k_ch = (static_cast<std::size_t>(co) * c_in + ci) *
                                   spec.kernel_h * spec.kernel_w;
          for (int a = 0; a < spec.kernel_h; ++a) {
            const std::size_t x_row = x_ch +
                                      static_cast<std::size_t>(i * s + r * a) * w +
                                      j * s;
            const std::size_t k_row = k_ch + static_cast<std::size_t>(a) * spec.kernel_w;
            for (int b = 0; b < spec.kernel_w; ++b) {
              const std::size_t xi = x_row + static_cast<std::size_t>(r) * b;
              gk[k_row + b] += g * x[xi];
              gx[xi] += g * k[k_row + b];
            }
          }
        }
      }
    }
  }
  return grads;
}

Tensor conv2d_input_adjoint(const Tensor& grad_output, const ConvSpec& spec,
                            const Tensor& kernels,
                            const std::vector<int>& input_shape) {
  if (input_shape.size() != 3 || input_shape[0] != spec.in_channels) {
    throw std::invalid_argument("conv adjoint input shape " +
                                shape_string(input_shape) +
                                " does not match spec channels " +
                                std::to_string(spec.in_channels));
  }
  const int h = input_shape[1];
  const int w = input_shape[2];
  const int out_h = conv_output_size(h, spec.kernel_h, spec.stride, spec.dilation);
  const int out_w = conv_output_size(w, spec.kernel_w, spec.stride, spec.dilation);
  if (grad_output.rank() != 3 || grad_output.dim(0) != spec.out_channels ||
      grad_output.dim(1) != out_h || grad_output.dim(2) != out_w) {
    throw std::invalid_argument("conv adjoint grad shaped " +
                                grad_output.shape_string() + ", expected (" +
                                std::to_string(spec.out_channels) + ", " +
                                std::to_string(out_h) + ", " +
                                std::to_string(out_w) + ")");
  }
  Tensor grad_input(input_shape);
  const double* k = kernels.data();
  const double* gy = grad_output.data();
  double* gx = grad_input.data();
  const int s = spec.stride;
  const int r = spec.dilation;
  for (int co = 0; co < spec.out_channels; ++co) {
    for (int i = 0; i < out_h; ++i) {
      for (int j = 0; j < out_w; ++j) {
        const double g = gy[(static_cast<std::size_t>(co) * out_h + i) * out_w + j];
        if (g == 0.0) continue;
        for (int ci = 0; ci < spec.in_channels; ++ci) {
          const std::size_t x_ch = static_cast<std::size_t>(ci) * h * w;
          const std::size_t k_ch = (static_cast<std::size_t>(co) * spec.in_channels + ci) *
                                   spec.kernel_h * spec.kernel_w;
          for (int a = 0; a < spec.kernel_h; ++a) {
            for (int b = 0; b < spec.kernel_w; ++b) {
              gx[x_ch + static_cast<std::size_t>(i * s + r * a) * w + j * s +
                 static_cast<std::size_t>(r) * b] +=
                  g * k[k_ch + static_cast<std::size_t>(a) * spec.kernel_w + b];
            }
          }
        }
      }
    }
  }
  return grad_input;
}

Tensor max_pool2d(const Tensor& input, int pool_h, int pool_w, PoolCache* cache) {
  if (input.rank() != 3) {
    throw std::invalid_argument("pool input must be rank 3 [C, H, W], got " +
                                input.shape_string());
  }
  if (pool_h <= 0 || pool_w <= 0) {
    throw std::invalid_argument("pool sizes must be positive");
  }
  const int c = input.dim(0);
  const int h = input.dim(1);
  const int w = input.dim(2);
  if (h % pool_h != 0 || w % pool_w != 0) {
    throw std::invalid_argument(
        "pool " + std::to_string(pool_h) + "x" + std::to_string(pool_w) +
        " does not divide input " + std::to_string(h) + "x" + std::to_string(w));
  }
  const int out_h = h / pool_h;
  const int out_w = w / pool_w;
  Tensor out({c, out_h, out_w});
  std::vector<std::size_t> argmax(out.size());
  const double* x = input.data();
  double* y = out.data();

  std::size_t o = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < out_h; ++i) {
      for (int j = 0; j < out_w; ++j, ++o) {
        std::size_t best = (static_cast<std::size_t>(ch) * h + i * pool_h) * w +
                           static_cast<std::size_t>(j) * pool_w;
        double best_val = x[best];
        for (int a = 0; a < pool_h; ++a) {
          for (int b = 0; b < pool_w; ++b) {
            const std::size_t idx =
                (static_cast<std::size_t>(ch) * h + i * pool_h + a) * w +
                static_cast<std::size_t>(j) * pool_w + b;
            // Strict comparison: ties keep the lowest flat index.
            if (x[idx] > best_val) {
              best_val = x[idx];
              best = idx;
            }
          }
        }
        y[o] = best_val;
        argmax[o] = best;
      }
    }
  }

  if (cache != nullptr) {
    cache->input_shape = input.shape();
    cache->argmax = std::move(argmax);
    cache->valid = true;
  }
  return out;
}

Tensor max_pool2d_backward(const Tensor& grad_output, const PoolCache& cache) {
  if (!cache.valid) {
    throw std::runtime_error("pool backward called without a forward cache");
  }
  if (grad_output.size() != cache.argmax.size()) {
    throw std::invalid_argument(
        "pool grad_output has " + std::to_string(grad_output.size()) +
        " cells, cache expects " + std::to_string(cache.argmax.size()));
  }
  Tensor grad_input(cache.input_shape);
  double* gx = grad_input.data();
  const double* gy = grad_output.data();
  for (std::size_t o = 0; o < cache.argmax.size(); ++o) {
    gx[cache.argmax[o]] += gy[o];
  }
  return grad_input;
}

Tensor relu(const Tensor& input, ReluCache* cache) {
  Tensor out = input;
  for (double& v : out.values()) {
    if (v < 0.0) v = 0.0;
  }
  if (cache != nullptr) {
    cache->pre_activation = input;
    cache->valid = true;
  }
  return out;
}

Tensor relu_backward(const Tensor& grad_output, const ReluCache& cache) {
  if (!cache.valid) {
    throw std::runtime_error("relu backward called without a forward cache");
  }
  if (!shapes_equal(grad_output, cache.pre_activation)) {
    throw std::invalid_argument("relu grad_output shaped " +
                                grad_output.shape_string() + ", cache expects " +
                                cache.pre_activation.shape_string());
  }
  Tensor grad_input = grad_output;
  const double* pre = cache.pre_activation.data();
  double* g = grad_input.data();
  for (std::size_t i = 0; i < grad_input.size(); ++i) {
    // Gradient at exactly 0 is 0.
    if (pre[i] <= 0.0) g[i] = 0.0;
  }
  return grad_input;
}

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias,
              LinearCache* cache) {
  if (input.rank() != 1) {
    throw std::invalid_argument("linear input must be rank 1, got " +
                                input.shape_string());
  }
  if (weights.rank() != 2 || weights.dim(1) != input.dim(0)) {
    throw std::invalid_argument("linear weights shaped " +
                                weights.shape_string() + " do not accept input " +
                                input.shape_string());
  }
  const int m = weights.dim(0);
  const int n = weights.dim(1);
  if (bias.rank() != 1 || bias.dim(0) != m) {
    throw std::invalid_argument("linear bias shaped " + bias.shape_string() +
                                ", expected (" + std::to_string(m) + ")");
  }
  Tensor out({m});
  const double* x = input.data();
  const double* wgt = weights.data();
  for (int i = 0; i < m; ++i) {
    double acc = bias[static_cast<std::size_t>(i)];
    const double* row = wgt + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) acc += row[j] * x[j];
    out[static_cast<std::size_t>(i)] = acc;
  }
  if (cache != nullptr) {
    cache->input = input;
    cache->valid = true;
  }
  return out;
}

LinearGrads linear_backward(const Tensor& grad_output, const LinearCache& cache,
                            const Tensor& weights) {
  if (!cache.valid) {
    throw std::runtime_error("linear backward called without a forward cache");
  }
  const int m = weights.dim(0);
  const int n = weights.dim(1);
  if (grad_output.rank() != 1 || grad_output.dim(0) != m) {
    throw std::invalid_argument("linear grad_output shaped " +
                                grad_output.shape_string() + ", expected (" +
                                std::to_string(m) + ")");
  }
  LinearGrads grads;
  grads.input = Tensor({n});
  grads.weights = Tensor(weights.shape());
  grads.bias = grad_output;
  const double* x = cache.input.data();
  const double* wgt = weights.data();
  const double* gy = grad_output.data();
  double* gx = grads.input.data();
  double* gw = grads.weights.data();
  for (int i = 0; i < m; ++i) {
    const double g = gy[i];
    const double* row = wgt + static_cast<std::size_t>(i) * n;
    double* grow = gw + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      grow[j] += g * x[j];
      gx[j] += g * row[j];
    }
  }
  return grads;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1) {
    throw std::invalid_argument("softmax expects rank-1 logits, got " +
                                logits.shape_string());
  }
  double max_logit = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) {
    max_logit = std::max(max_logit, logits[i]);
  }
  Tensor probs(logits.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  for (double& p : probs.values()) p /= sum;
  return probs;
}

SoftmaxLoss softmax_cross_entropy(const Tensor& logits, int label) {
  if (logits.rank() != 1) {
    throw std::invalid_argument("softmax expects rank-1 logits, got " +
                                logits.shape_string());
  }
  if (label < 0 || label >= logits.dim(0)) {
    throw std::invalid_argument("label " + std::to_string(label) +
                                " out of range for " +
                                std::to_string(logits.dim(0)) + " classes");
  }
  double max_logit = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) {
    max_logit = std::max(max_logit, logits[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    sum += std::exp(logits[i] - max_logit);
  }
  const double log_sum = std::log(sum) + max_logit;

  SoftmaxLoss result;
  result.loss = log_sum - logits[static_cast<std::size_t>(label)];
  result.probabilities = Tensor(logits.shape());
  result.grad_logits = Tensor(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = std::exp(logits[i] - log_sum);
    result.probabilities[i] = p;
    result.grad_logits[i] = p;
  }
  result.grad_logits[static_cast<std::size_t>(label)] -= 1.0;
  return result;
}

int receptive_field_size(const std::vector<RfLayer>& layers, int top_size) {
  if (layers.empty()) {
    throw std::invalid_argument("receptive field needs at least one layer");
  }
  if (top_size <= 0) {
    throw std::invalid_argument("top_size must be positive");
  }
  int c = top_size;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    if (it->kernel <= 0 || it->stride <= 0 || it->dilation <= 0) {
      throw std::invalid_argument(
          "receptive field layers need positive kernel, stride and dilation");
    }
    c = it->stride * c + dilated_extent(it->kernel, it->dilation) - it->stride;
  }
  return c;
}

void Differentiable::zero_gradients() {
  for (Tensor* g : parameter_gradients()) g->fill(0.0);
}

double grad_check(Differentiable& unit, const Tensor& input, double epsilon) {
  if (epsilon <= 0.0) {
    throw std::invalid_argument("grad_check epsilon must be positive");
  }
  const Tensor base_output = unit.forward(input);

  // Fixed seeded linear probe: loss(y) = sum_k w_k * y_k. Linear in the
  // output, so a pure affine unit has bit-exact finite differences.
  Rng rng(0x5eedc0deULL);
  std::vector<double> probe(base_output.size());
  for (double& w : probe) w = rng.uniform(-1.0, 1.0);

  const auto probe_loss = [&probe](const Tensor& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += probe[i] * y[i];
    return acc;
  };

  unit.zero_gradients();
  Tensor grad_out(base_output.shape(), probe);
  const Tensor analytic_input_grad = unit.backward(grad_out);
  std::vector<Tensor> analytic_param_grads;
  for (Tensor* g : unit.parameter_gradients()) analytic_param_grads.push_back(*g);

  double max_rel_err = 0.0;
  const auto compare = [&max_rel_err](double analytic, double numeric) {
    const double scale = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    max_rel_err = std::max(max_rel_err, std::fabs(analytic - numeric) / scale);
  };

  Tensor probe_input = input;
  for (std::size_t i = 0; i < probe_input.size(); ++i) {
    const double saved = probe_input[i];
    probe_input[i] = saved + epsilon;
    const double up = probe_loss(unit.forward(probe_input));
    probe_input[i] = saved - epsilon;
    const double down = probe_loss(unit.forward(probe_input));
    probe_input[i] = saved;
    compare(analytic_input_grad[i], (up - down) / (2.0 * epsilon));
  }

  const std::vector<Tensor*> params = unit.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = *params[p];
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double saved = param[i];
      param[i] = saved + epsilon;
      const double up = probe_loss(unit.forward(input));
      param[i] = saved - epsilon;
      const double down = probe_loss(unit.forward(input));
      param[i] = saved;
      compare(analytic_param_grads[p][i], (up - down) / (2.0 * epsilon));
    }
  }

  // Leave the unit with a fresh forward pass over the unperturbed input so
  // caches match the restored parameters.
  unit.forward(input);
  return max_rel_err;
}

ConvLayer::ConvLayer(ConvSpec spec_in)
    : spec(spec_in),
      kernels({spec_in.out_channels, spec_in.in_channels, spec_in.kernel_h,
               spec_in.kernel_w}),
      bias({spec_in.out_channels}),
      kernels_grad(kernels.shape()),
      bias_grad(bias.shape()) {}

Tensor ConvLayer::forward(const Tensor& input) {
  return dilated_conv2d(input, spec, kernels, bias, &cache);
}

Tensor ConvLayer::backward(const Tensor& grad_output) {
  ConvGrads grads = dilated_conv2d_backward(grad_output, cache, spec, kernels);
  for (std::size_t i = 0; i < kernels_grad.size(); ++i) {
    kernels_grad[i] += grads.kernels[i];
  }
  for (std::size_t i = 0; i < bias_grad.size(); ++i) {
    bias_grad[i] += grads.bias[i];
  }
  return grads.input;
}

Tensor ReluLayer::forward(const Tensor& input) { return relu(input, &cache); }

Tensor ReluLayer::backward(const Tensor& grad_output) {
  return relu_backward(grad_output, cache);
}

MaxPoolLayer::MaxPoolLayer(int pool_h_in, int pool_w_in)
    : pool_h(pool_h_in), pool_w(pool_w_in) {}

Tensor MaxPoolLayer::forward(const Tensor& input) {
  return max_pool2d(input, pool_h, pool_w, &cache);
}

Tensor MaxPoolLayer::backward(const Tensor& grad_output) {
  return max_pool2d_backward(grad_output, cache);
}

Tensor FlattenLayer::forward(const Tensor& input) {
  input_shape = input.shape();
  return input.reshaped({static_cast<int>(input.size())});
}

Tensor FlattenLayer::backward(const Tensor& grad_output) {
  if (input_shape.empty()) {
    throw std::runtime_error("flatten backward called without a forward pass");
  }
  return grad_output.reshaped(input_shape);
}

LinearLayer::LinearLayer(int in_features, int out_features)
    : weights({out_features, in_features}),
      bias({out_features}),
      weights_grad(weights.shape()),
      bias_grad(bias.shape()) {}

Tensor LinearLayer::forward(const Tensor& input) {
  return linear(input, weights, bias, &cache);
}

Tensor LinearLayer::backward(const Tensor& grad_output) {
  LinearGrads grads = linear_backward(grad_output, cache, weights);
  for (std::size_t i = 0; i < weights_grad.size(); ++i) {
    weights_grad[i] += grads.weights[i];
  }
  for (std::size_t i = 0; i < bias_grad.size(); ++i) {
    bias_grad[i] += grads.bias[i];
  }
  return grads.input;
}

void Sequential::add(std::unique_ptr<Differentiable> layer) {
  layers_.push_back(std::move(layer));
}

Tensor Sequential::forward(const Tensor& input) {
  Tensor x = input;
  for (auto& layer : layers_) x = layer->forward(x);
  return x;
}

Tensor Sequential::backward(const Tensor& grad_output) {
  Tensor g = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    g = (*it)->backward(g);
  }
  return g;
}

std::vector<Tensor*> Sequential::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    for (Tensor* p : layer->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<Tensor*> Sequential::parameter_gradients() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    for (Tensor* g : layer->parameter_gradients()) out.push_back(g);
  }
  return out;
}

}  // namespace hdlcnn
