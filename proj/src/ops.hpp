#pragma once

#include <memory>
#include <vector>

#include "tensor.hpp"

namespace hdlcnn {

// ---------------------------------------------------------------------------
// Dilated 2-D convolution (valid, no padding).
//
// Output cell (co, i, j) = bias[co]
//   + sum_ci sum_a sum_b kernels[co, ci, a, b] * input[ci, i*s + r*a, j*s + r*b]
// with stride s and dilation r. Output extent per spatial dim:
//   out = (in - r * (k - 1) - 1) / s + 1.
// ---------------------------------------------------------------------------

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int dilation = 1;
};

// Spatial extent covered by a dilated kernel: r * (k - 1) + 1.
int dilated_extent(int kernel, int dilation);

// Valid-convolution output size; throws if the dilated kernel does not fit.
int conv_output_size(int input, int kernel, int stride, int dilation);

struct ConvCache {
  bool valid = false;
  Tensor input;  // saved forward input [C_in, H, W]
};

// input [C_in, H, W], kernels [C_out, C_in, kh, kw], bias [C_out]
// -> [C_out, H', W']. Fills *cache for the backward pass when given.
Tensor dilated_conv2d(const Tensor& input, const ConvSpec& spec,
                      const Tensor& kernels, const Tensor& bias,
                      ConvCache* cache = nullptr);

struct ConvGrads {
  Tensor input;
  Tensor kernels;
  Tensor bias;
};

ConvGrads dilated_conv2d_backward(const Tensor& grad_output,
                                  const ConvCache& cache, const ConvSpec& spec,
                                  const Tensor& kernels);

// Adjoint of the convolution with respect to its input only (the linear map
// transposed); used where no parameter gradients are wanted.
Tensor conv2d_input_adjoint(const Tensor& grad_output, const ConvSpec& spec,
                            const Tensor& kernels,
                            const std::vector<int>& input_shape);

// ---------------------------------------------------------------------------
// Max pooling. Spatial dims must divide evenly by the pool size; ties inside
// a window resolve to the lowest flat index so routing is deterministic.
// ---------------------------------------------------------------------------

struct PoolCache {
  bool valid = false;
  std::vector<int> input_shape;
  std::vector<std::size_t> argmax;  // winner flat index per output cell
};

Tensor max_pool2d(const Tensor& input, int pool_h, int pool_w,
                  PoolCache* cache = nullptr);

Tensor max_pool2d_backward(const Tensor& grad_output, const PoolCache& cache);

// ---------------------------------------------------------------------------
// Elementwise relu. The subgradient at exactly 0 is taken as 0.
// ---------------------------------------------------------------------------

struct ReluCache {
  bool valid = false;
  Tensor pre_activation;
};

Tensor relu(const Tensor& input, ReluCache* cache = nullptr);
Tensor relu_backward(const Tensor& grad_output, const ReluCache& cache);

// ---------------------------------------------------------------------------
// Fully connected layer: x [n], weights [m, n], bias [m] -> [m].
// ---------------------------------------------------------------------------

struct LinearCache {
  bool valid = false;
  Tensor input;
};

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias,
              LinearCache* cache = nullptr);

struct LinearGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

LinearGrads linear_backward(const Tensor& grad_output, const LinearCache& cache,
                            const Tensor& weights);

// ---------------------------------------------------------------------------
// Softmax + cross entropy. Loss is computed in log space (max-subtracted
// logsumexp), so extreme logits stay finite.
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& logits);

struct SoftmaxLoss {
  double loss = 0.0;
  Tensor probabilities;
  Tensor grad_logits;  // d loss / d logits = p - onehot(label)
};

SoftmaxLoss softmax_cross_entropy(const Tensor& logits, int label);

// ---------------------------------------------------------------------------
// Receptive field of one output cell, per spatial dimension. Layers are given
// input-to-output; pooling enters as kernel = pool, stride = pool, dilation 1.
// Recurrence, applied top-down with c_top = top_size:
//   c_below = s * c_above + (r * (k - 1) + 1) - s
// ---------------------------------------------------------------------------

struct RfLayer {
  int kernel = 1;
  int stride = 1;
  int dilation = 1;
};

int receptive_field_size(const std::vector<RfLayer>& layers, int top_size);

// ---------------------------------------------------------------------------
// Differentiable unit: anything with a forward pass, a backward pass, and an
// optional parameter list. Gradients accumulate across backward calls until
// zero_gradients(). grad_check verifies analytic gradients of any unit
// against central finite differences of a fixed seeded linear probe loss and
// returns the max relative error over every parameter and input coordinate.
// ---------------------------------------------------------------------------

class Differentiable {
 public:
  virtual ~Differentiable() = default;
  virtual Tensor forward(const Tensor& input) = 0;
  virtual Tensor backward(const Tensor& grad_output) = 0;
  virtual std::vector<Tensor*> parameters() { return {}; }
  virtual std::vector<Tensor*> parameter_gradients() { return {}; }
  virtual void zero_gradients();
};

double grad_check(Differentiable& unit, const Tensor& input, double epsilon);

// Layer wrappers over the functional ops, for composing networks.

class ConvLayer : public Differentiable {
 public:
  explicit ConvLayer(ConvSpec spec);

  Tensor forward(const Tensor& input) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Tensor*> parameters() override { return {&kernels, &bias}; }
  std::vector<Tensor*> parameter_gradients() override {
    return {&kernels_grad, &bias_grad};
  }

  ConvSpec spec;
  Tensor kernels, bias;
  Tensor kernels_grad, bias_grad;
  ConvCache cache;
};

class ReluLayer : public Differentiable {
 public:
  Tensor forward(const Tensor& input) override;
  Tensor backward(const Tensor& grad_output) override;
  ReluCache cache;
};

class MaxPoolLayer : public Differentiable {
 public:
  MaxPoolLayer(int pool_h, int pool_w);
  Tensor forward(const Tensor& input) override;
  Tensor backward(const Tensor& grad_output) override;
  int pool_h, pool_w;
  PoolCache cache;
};

class FlattenLayer : public Differentiable {
 public:
  Tensor forward(const Tensor& input) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<int> input_shape;
};

class LinearLayer : public Differentiable {
 public:
  LinearLayer(int in_features, int out_features);
  Tensor forward(const Tensor& input) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Tensor*> parameters() override { return {&weights, &bias}; }
  std::vector<Tensor*> parameter_gradients() override {
    return {&weights_grad, &bias_grad};
  }

  Tensor weights, bias;
  Tensor weights_grad, bias_grad;
  LinearCache cache;
};

class Sequential : public Differentiable {
 public:
  void add(std::unique_ptr<Differentiable> layer);
  Tensor forward(const Tensor& input) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Tensor*> parameters() override;
  std::vector<Tensor*> parameter_gradients() override;

 private:
  std::vector<std::unique_ptr<Differentiable>> layers_;
};

}  // namespace hdlcnn
