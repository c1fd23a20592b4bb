#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "clustering.hpp"
#include "data.hpp"
#include "ops.hpp"
#include "tensor.hpp"

namespace hdlcnn {

enum class Activation { relu, none };

struct ModelConfig {
  int n_features = 22;
  int n_timesteps = 20;
  int n_classes = 11;
  int conv1_channels = 16;
  int conv2_channels = 32;
  int kernel_h = 3;
  int kernel_w = 3;
  int dilation = 2;
  int pool_h = 2;
  int pool_w = 2;
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;  // parameter init
};

// Resolved tensor shapes of every stage, fixed at build time.
struct LayerShapes {
  std::vector<int> segment1;
  std::vector<int> segment2;
  std::vector<int> conv1_out1;
  std::vector<int> conv1_out2;
  std::vector<int> concat;
  std::vector<int> conv2_out;
  std::vector<int> pool_out;
  int flatten = 0;
  int output = 0;
};

// Full activation record of one sample's forward pass, for attribution.
struct ForwardTrace {
  Tensor seg1, seg2;            // permuted input segments
  Tensor conv1a_pre, conv1b_pre;
  Tensor act1a, act1b;
  Tensor concat;
  Tensor conv2_pre, act2;
  Tensor pooled;
  PoolCache pool_cache;
  Tensor flat;
  Tensor logits;
};

// Two-branch dilated-convolution classifier. The input sample arrives in the
// original sensor order [1, p, t]; the model's feature ordering reorders rows
// internally, splits them at the boundary into two segments, convolves each
// branch, concatenates along the feature axis, convolves again, pools,
// flattens and classifies. Valid (no-padding) convolutions throughout.
class HdlcnnModel : public Differentiable {
 public:
  // Validates the config/ordering against the resulting shapes; errors name
  // the offending dimensions.
  HdlcnnModel(const ModelConfig& config, const FeatureOrdering& ordering);

  const ModelConfig& config() const { return config_; }
  const FeatureOrdering& ordering() const { return ordering_; }
  const LayerShapes& layer_shapes() const { return shapes_; }

  // Differentiable interface: forward [1, p, t] -> logits [n_classes]. Used
  // by training and gradient checking; relies on layer caches.
  Tensor forward(const Tensor& sample) override;
  Tensor backward(const Tensor& grad_logits) override;
  std::vector<Tensor*> parameters() override;
  std::vector<Tensor*> parameter_gradients() override;

  // Const inference paths (no cache mutation).
  Tensor logits(const Tensor& sample) const;
  Tensor probabilities(const Tensor& sample) const;  // softmax, sums to 1
  int predict(const Tensor& sample) const;
  ForwardTrace trace(const Tensor& sample) const;

  // Stable names for serialization: conv1a/conv1b/conv2 kernels+bias and
  // fc weights+bias, in declaration order.
  std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;
  std::vector<std::pair<std::string, Tensor*>> named_parameters();

  // Parameter updates invalidate the forward caches.
  void mark_parameters_updated();

  const ConvLayer& conv1a() const { return conv1a_; }
  const ConvLayer& conv1b() const { return conv1b_; }
  const ConvLayer& conv2() const { return conv2_; }
  const LinearLayer& fc() const { return fc_; }

 private:
  void check_sample(const Tensor& sample) const;

  ModelConfig config_;
  FeatureOrdering ordering_;
  LayerShapes shapes_;

  ConvLayer conv1a_, conv1b_, conv2_;
  LinearLayer fc_;
  ReluCache relu1a_, relu1b_, relu2_;
  PoolCache pool_cache_;
};

// Builds and He-uniform-initializes a model (seed taken from the config).
HdlcnnModel build_model(const ModelConfig& config, const FeatureOrdering& ordering);

// Identity ordering split at floor(p / 2): the no-clustering baseline.
FeatureOrdering identity_ordering(int n_features);

// ---------------------------------------------------------------------------
// Training and evaluation.
// ---------------------------------------------------------------------------

enum class Optimizer { adam, sgd };

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t shuffle_seed = 0;
};

struct TrainHistory {
  std::vector<double> loss;      // mean cross entropy per epoch
  std::vector<double> accuracy;  // training accuracy per epoch
};

TrainHistory train_model(HdlcnnModel& model, const Dataset& data,
                         const TrainConfig& config);

struct Metrics {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // recall; -1 for absent classes
  std::vector<std::vector<int>> confusion;  // [true][predicted]
  int n_samples = 0;
};

Metrics evaluate(const HdlcnnModel& model, const Dataset& data);

}  // namespace hdlcnn
