#include "hdlcnn.h"

#include <cstring>
#include <string>
#include <vector>

#include "clustering.hpp"
#include "data.hpp"
#include "explainer.hpp"
#include "io.hpp"
#include "model.hpp"

namespace {

thread_local std::string g_last_error = "no error";

hdl_status fail(hdl_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

hdl_status status_of(const hdlcnn::IoError& e) {
  switch (e.code()) {
    case hdlcnn::IoErrorCode::open_failed:
      return HDL_ERR_IO;
    case hdlcnn::IoErrorCode::bad_magic:
      return HDL_ERR_BAD_MAGIC;
    case hdlcnn::IoErrorCode::bad_version:
      return HDL_ERR_BAD_VERSION;
    case hdlcnn::IoErrorCode::truncated:
      return HDL_ERR_TRUNCATED;
    case hdlcnn::IoErrorCode::bad_checksum:
      return HDL_ERR_BAD_CHECKSUM;
    case hdlcnn::IoErrorCode::bad_manifest:
      return HDL_ERR_BAD_MANIFEST;
  }
  return HDL_ERR_IO;
}

// Runs a fallible body, translating exceptions into status codes.
template <typename Fn>
hdl_status guarded(Fn&& body) {
  try {
    return body();
  } catch (const hdlcnn::IoError& e) {
    return fail(status_of(e), e.what());
  } catch (const std::invalid_argument& e) {
    return fail(HDL_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(HDL_ERR_RUNTIME, e.what());
  }
}

}  // namespace

struct hdl_dataset {
  hdlcnn::Dataset impl;
};

struct hdl_synth_config {
  hdlcnn::SynthConfig impl;
};

struct hdl_clustering {
  hdlcnn::Dendrogram dendrogram;
  hdlcnn::FeatureOrdering ordering;
};

struct hdl_model {
  hdlcnn::HdlcnnModel impl;
};

struct hdl_metrics {
  hdlcnn::Metrics impl;
};

struct hdl_explanation {
  hdlcnn::Explanation impl;
};

struct hdl_importance {
  std::vector<hdlcnn::Explanation> explanations;
  bool mean_abs = true;
};

extern "C" {

const char* hdl_last_error(void) { return g_last_error.c_str(); }

/* ------------------------------------------------------------------ */
/* Synthetic benchmark data                                            */
/* ------------------------------------------------------------------ */

hdl_synth_config* hdl_synth_config_create(int n_features) {
  if (n_features < 2) {
    fail(HDL_ERR_INVALID_ARGUMENT, "synthetic config needs at least 2 features");
    return nullptr;
  }
  auto* config = new hdl_synth_config;
  config->impl.n_features = n_features;
  config->impl.blocks.clear();
  config->impl.ar_coefficients.clear();
  config->impl.faults.clear();
  return config;
}

void hdl_synth_config_destroy(hdl_synth_config* config) { delete config; }

hdl_status hdl_synth_config_add_block(hdl_synth_config* config,
                                      const int* features, int count,
                                      double correlation) {
  if (config == nullptr || features == nullptr || count < 1) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "block needs a config and features");
  }
  hdlcnn::SynthBlock block;
  block.features.assign(features, features + count);
  block.correlation = correlation;
  config->impl.blocks.push_back(std::move(block));
  return HDL_OK;
}

hdl_status hdl_synth_config_set_ar(hdl_synth_config* config,
                                   const double* coefficients, int count) {
  if (config == nullptr || coefficients == nullptr || count < 1) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "AR coefficients missing");
  }
  config->impl.ar_coefficients.assign(coefficients, coefficients + count);
  return HDL_OK;
}

hdl_status hdl_synth_config_add_fault(hdl_synth_config* config, const char* name,
                                      int root_feature, double onset_fraction,
                                      double mean_shift,
                                      double variance_multiplier,
                                      double propagation) {
  if (config == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "fault needs a config");
  }
  hdlcnn::SynthFault fault;
  fault.name = name == nullptr ? "" : name;
  fault.root_feature = root_feature;
  fault.onset_fraction = onset_fraction;
  fault.mean_shift = mean_shift;
  fault.variance_multiplier = variance_multiplier;
  fault.propagation = propagation;
  config->impl.faults.push_back(std::move(fault));
  return HDL_OK;
}

hdl_status hdl_synth_config_set_windows(hdl_synth_config* config,
                                        int train_windows, int test_windows,
                                        int width, int stride) {
  if (config == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "window sizes need a config");
  }
  config->impl.train_windows = train_windows;
  config->impl.test_windows = test_windows;
  config->impl.window_width = width;
  config->impl.window_stride = stride;
  return HDL_OK;
}

hdl_status hdl_synth_config_set_seed(hdl_synth_config* config, uint64_t seed) {
  if (config == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "seed needs a config");
  }
  config->impl.seed = seed;
  return HDL_OK;
}

hdl_status hdl_synth_generate(const hdl_synth_config* config,
                              hdl_dataset** train_out, hdl_dataset** test_out) {
  if (config == nullptr || train_out == nullptr || test_out == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "generation needs a config and outputs");
  }
  return guarded([&] {
    hdlcnn::SynthResult result = hdlcnn::synth_generate(config->impl);
    *train_out = new hdl_dataset{std::move(result.train)};
    *test_out = new hdl_dataset{std::move(result.test)};
    return HDL_OK;
  });
}

/* ------------------------------------------------------------------ */
/* Datasets                                                            */
/* ------------------------------------------------------------------ */

hdl_dataset* hdl_dataset_load(const char* path) {
  if (path == nullptr) {
    fail(HDL_ERR_INVALID_ARGUMENT, "dataset path is NULL");
    return nullptr;
  }
  hdl_dataset* dataset = nullptr;
  guarded([&] {
    dataset = new hdl_dataset{hdlcnn::load_dataset(path)};
    return HDL_OK;
  });
  return dataset;
}

hdl_status hdl_dataset_save(const hdl_dataset* dataset, const char* path) {
  if (dataset == nullptr || path == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "dataset save needs a dataset and path");
  }
  return guarded([&] {
    hdlcnn::save_dataset(dataset->impl, path);
    return HDL_OK;
  });
}

void hdl_dataset_destroy(hdl_dataset* dataset) { delete dataset; }

int hdl_dataset_sample_count(const hdl_dataset* dataset) {
  return dataset == nullptr ? -1 : static_cast<int>(dataset->impl.samples.size());
}

int hdl_dataset_feature_count(const hdl_dataset* dataset) {
  return dataset == nullptr ? -1 : dataset->impl.n_features();
}

int hdl_dataset_timestep_count(const hdl_dataset* dataset) {
  return dataset == nullptr ? -1 : dataset->impl.n_timesteps();
}

int hdl_dataset_class_count(const hdl_dataset* dataset) {
  return dataset == nullptr ? -1 : dataset->impl.n_classes();
}

const char* hdl_dataset_class_name(const hdl_dataset* dataset, int class_index) {
  if (dataset == nullptr || class_index < 0 ||
      class_index >= dataset->impl.n_classes()) {
    fail(HDL_ERR_INVALID_ARGUMENT, "class index out of range");
    return nullptr;
  }
  return dataset->impl.class_names[static_cast<std::size_t>(class_index)].c_str();
}

int hdl_dataset_label(const hdl_dataset* dataset, int sample) {
  if (dataset == nullptr || sample < 0 ||
      static_cast<std::size_t>(sample) >= dataset->impl.labels.size()) {
    fail(HDL_ERR_INVALID_ARGUMENT, "sample index out of range");
    return -1;
  }
  return dataset->impl.labels[static_cast<std::size_t>(sample)];
}

hdl_status hdl_dataset_copy_sample(const hdl_dataset* dataset, int sample,
                                   double* out, size_t capacity) {
  if (dataset == nullptr || out == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "sample copy needs a dataset and buffer");
  }
  if (sample < 0 || static_cast<std::size_t>(sample) >= dataset->impl.samples.size()) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "sample index out of range");
  }
  const hdlcnn::Tensor& t = dataset->impl.samples[static_cast<std::size_t>(sample)];
  if (capacity < t.size()) {
    return fail(HDL_ERR_INVALID_ARGUMENT,
                "buffer holds " + std::to_string(capacity) + " doubles, sample has " +
                    std::to_string(t.size()));
  }
  std::memcpy(out, t.data(), t.size() * sizeof(double));
  return HDL_OK;
}

/* ------------------------------------------------------------------ */
/* Feature clustering                                                  */
/* ------------------------------------------------------------------ */

hdl_clustering* hdl_cluster_features(const hdl_dataset* dataset) {
  if (dataset == nullptr) {
    fail(HDL_ERR_INVALID_ARGUMENT, "clustering needs a dataset");
    return nullptr;
  }
  hdl_clustering* clustering = nullptr;
  guarded([&] {
    const hdlcnn::Tensor features = hdlcnn::feature_matrix(dataset->impl);
    hdlcnn::Dendrogram dendrogram = hdlcnn::ward_linkage(features);
    hdlcnn::FeatureOrdering ordering =
        hdlcnn::reorder_features(hdlcnn::cut_to_k(dendrogram, 2));
    clustering = new hdl_clustering{std::move(dendrogram), std::move(ordering)};
    return HDL_OK;
  });
  return clustering;
}

void hdl_clustering_destroy(hdl_clustering* clustering) { delete clustering; }

int hdl_clustering_merge_count(const hdl_clustering* clustering) {
  return clustering == nullptr
             ? -1
             : static_cast<int>(clustering->dendrogram.steps.size());
}

hdl_status hdl_clustering_merge_step(const hdl_clustering* clustering, int step,
                                     int* id_a, int* id_b, double* distance,
                                     int* size) {
  if (clustering == nullptr || step < 0 ||
      static_cast<std::size_t>(step) >= clustering->dendrogram.steps.size()) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "merge step out of range");
  }
  const hdlcnn::MergeStep& s =
      clustering->dendrogram.steps[static_cast<std::size_t>(step)];
  if (id_a != nullptr) *id_a = s.id_a;
  if (id_b != nullptr) *id_b = s.id_b;
  if (distance != nullptr) *distance = s.distance;
  if (size != nullptr) *size = s.size;
  return HDL_OK;
}

hdl_status hdl_clustering_permutation(const hdl_clustering* clustering, int* out,
                                      size_t capacity) {
  if (clustering == nullptr || out == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "permutation needs a clustering and buffer");
  }
  const std::vector<int>& perm = clustering->ordering.permutation;
  if (capacity < perm.size()) {
    return fail(HDL_ERR_INVALID_ARGUMENT,
                "buffer holds " + std::to_string(capacity) + " ints, permutation has " +
                    std::to_string(perm.size()));
  }
  std::memcpy(out, perm.data(), perm.size() * sizeof(int));
  return HDL_OK;
}

int hdl_clustering_boundary(const hdl_clustering* clustering) {
  return clustering == nullptr ? -1 : clustering->ordering.boundary;
}

/* ------------------------------------------------------------------ */
/* Model                                                               */
/* ------------------------------------------------------------------ */

void hdl_model_config_init(hdl_model_config* config) {
  if (config == nullptr) return;
  config->conv1_channels = 16;
  config->conv2_channels = 32;
  config->kernel_h = 3;
  config->kernel_w = 3;
  config->dilation = 2;
  config->pool_h = 2;
  config->pool_w = 2;
  config->use_relu = 1;
  config->seed = 0;
}

hdl_model* hdl_model_create(const hdl_dataset* train,
                            const hdl_model_config* config,
                            const int* permutation, int permutation_len,
                            int boundary) {
  if (train == nullptr || config == nullptr || permutation == nullptr) {
    fail(HDL_ERR_INVALID_ARGUMENT, "model needs a dataset, config and permutation");
    return nullptr;
  }
  hdl_model* model = nullptr;
  guarded([&] {
    hdlcnn::ModelConfig cfg;
    cfg.n_features = train->impl.n_features();
    cfg.n_timesteps = train->impl.n_timesteps();
    cfg.n_classes = train->impl.n_classes();
    cfg.conv1_channels = config->conv1_channels;
    cfg.conv2_channels = config->conv2_channels;
    cfg.kernel_h = config->kernel_h;
    cfg.kernel_w = config->kernel_w;
    cfg.dilation = config->dilation;
    cfg.pool_h = config->pool_h;
    cfg.pool_w = config->pool_w;
    cfg.activation = config->use_relu != 0 ? hdlcnn::Activation::relu
                                           : hdlcnn::Activation::none;
    cfg.seed = config->seed;
    hdlcnn::FeatureOrdering ordering;
    ordering.permutation.assign(permutation, permutation + permutation_len);
    ordering.boundary = boundary;
    model = new hdl_model{hdlcnn::build_model(cfg, ordering)};
    return HDL_OK;
  });
  return model;
}

void hdl_model_destroy(hdl_model* model) { delete model; }

hdl_model* hdl_model_load(const char* path) {
  if (path == nullptr) {
    fail(HDL_ERR_INVALID_ARGUMENT, "model path is NULL");
    return nullptr;
  }
  hdl_model* model = nullptr;
  guarded([&] {
    model = new hdl_model{hdlcnn::load_model(path)};
    return HDL_OK;
  });
  return model;
}

hdl_status hdl_model_save(const hdl_model* model, const char* path) {
  if (model == nullptr || path == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "model save needs a model and path");
  }
  return guarded([&] {
    hdlcnn::save_model(model->impl, path);
    return HDL_OK;
  });
}

int hdl_model_feature_count(const hdl_model* model) {
  return model == nullptr ? -1 : model->impl.config().n_features;
}

int hdl_model_timestep_count(const hdl_model* model) {
  return model == nullptr ? -1 : model->impl.config().n_timesteps;
}

int hdl_model_class_count(const hdl_model* model) {
  return model == nullptr ? -1 : model->impl.config().n_classes;
}

int hdl_model_boundary(const hdl_model* model) {
  return model == nullptr ? -1 : model->impl.ordering().boundary;
}

hdl_status hdl_model_permutation(const hdl_model* model, int* out,
                                 size_t capacity) {
  if (model == nullptr || out == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "permutation needs a model and buffer");
  }
  const std::vector<int>& perm = model->impl.ordering().permutation;
  if (capacity < perm.size()) {
    return fail(HDL_ERR_INVALID_ARGUMENT,
                "buffer holds " + std::to_string(capacity) + " ints, permutation has " +
                    std::to_string(perm.size()));
  }
  std::memcpy(out, perm.data(), perm.size() * sizeof(int));
  return HDL_OK;
}

void hdl_train_config_init(hdl_train_config* config) {
  if (config == nullptr) return;
  config->epochs = 30;
  config->batch_size = 32;
  config->learning_rate = 1e-3;
  config->use_sgd = 0;
  config->shuffle_seed = 0;
}

hdl_status hdl_model_train(hdl_model* model, const hdl_dataset* train,
                           const hdl_train_config* config, double* loss_out,
                           double* accuracy_out) {
  if (model == nullptr || train == nullptr || config == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "training needs a model, dataset and config");
  }
  return guarded([&] {
    hdlcnn::TrainConfig cfg;
    cfg.epochs = config->epochs;
    cfg.batch_size = config->batch_size;
    cfg.learning_rate = config->learning_rate;
    cfg.optimizer = config->use_sgd != 0 ? hdlcnn::Optimizer::sgd
                                         : hdlcnn::Optimizer::adam;
    cfg.shuffle_seed = config->shuffle_seed;
    const hdlcnn::TrainHistory history =
        hdlcnn::train_model(model->impl, train->impl, cfg);
    if (loss_out != nullptr) {
      std::memcpy(loss_out, history.loss.data(),
                  history.loss.size() * sizeof(double));
    }
    if (accuracy_out != nullptr) {
      std::memcpy(accuracy_out, history.accuracy.data(),
                  history.accuracy.size() * sizeof(double));
    }
    return HDL_OK;
  });
}

hdl_status hdl_model_predict(const hdl_model* model, const double* sample,
                             size_t sample_len, double* probabilities,
                             size_t capacity) {
  if (model == nullptr || sample == nullptr || probabilities == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "prediction needs a model, sample and buffer");
  }
  const hdlcnn::ModelConfig& cfg = model->impl.config();
  const std::size_t expected =
      static_cast<std::size_t>(cfg.n_features) * cfg.n_timesteps;
  if (sample_len != expected) {
    return fail(HDL_ERR_INVALID_ARGUMENT,
                "sample holds " + std::to_string(sample_len) + " doubles, model expects " +
                    std::to_string(expected));
  }
  if (capacity < static_cast<std::size_t>(cfg.n_classes)) {
    return fail(HDL_ERR_INVALID_ARGUMENT,
                "probability buffer holds " + std::to_string(capacity) +
                    " doubles, model has " + std::to_string(cfg.n_classes) +
                    " classes");
  }
  return guarded([&] {
    hdlcnn::Tensor t({1, cfg.n_features, cfg.n_timesteps},
                     std::vector<double>(sample, sample + sample_len));
    const hdlcnn::Tensor probs = model->impl.probabilities(t);
    std::memcpy(probabilities, probs.data(), probs.size() * sizeof(double));
    return HDL_OK;
  });
}

/* ------------------------------------------------------------------ */
/* Evaluation                                                          */
/* ------------------------------------------------------------------ */

hdl_metrics* hdl_model_evaluate(const hdl_model* model,
                                const hdl_dataset* dataset) {
  if (model == nullptr || dataset == nullptr) {
    fail(HDL_ERR_INVALID_ARGUMENT, "evaluation needs a model and dataset");
    return nullptr;
  }
  hdl_metrics* metrics = nullptr;
  guarded([&] {
    metrics = new hdl_metrics{hdlcnn::evaluate(model->impl, dataset->impl)};
    return HDL_OK;
  });
  return metrics;
}

void hdl_metrics_destroy(hdl_metrics* metrics) { delete metrics; }

double hdl_metrics_accuracy(const hdl_metrics* metrics) {
  return metrics == nullptr ? -1.0 : metrics->impl.accuracy;
}

double hdl_metrics_class_accuracy(const hdl_metrics* metrics, int class_index) {
  if (metrics == nullptr || class_index < 0 ||
      static_cast<std::size_t>(class_index) >=
          metrics->impl.per_class_accuracy.size()) {
    fail(HDL_ERR_INVALID_ARGUMENT, "class index out of range");
    return -1.0;
  }
  return metrics->impl.per_class_accuracy[static_cast<std::size_t>(class_index)];
}

int hdl_metrics_confusion(const hdl_metrics* metrics, int true_class,
                          int predicted_class) {
  if (metrics == nullptr || true_class < 0 || predicted_class < 0 ||
      static_cast<std::size_t>(true_class) >= metrics->impl.confusion.size() ||
      static_cast<std::size_t>(predicted_class) >= metrics->impl.confusion.size()) {
    fail(HDL_ERR_INVALID_ARGUMENT, "confusion cell out of range");
    return -1;
  }
  return metrics->impl.confusion[static_cast<std::size_t>(true_class)]
                                [static_cast<std::size_t>(predicted_class)];
}

int hdl_metrics_sample_count(const hdl_metrics* metrics) {
  return metrics == nullptr ? -1 : metrics->impl.n_samples;
}

/* ------------------------------------------------------------------ */
/* Attribution                                                         */
/* ------------------------------------------------------------------ */

hdl_explanation* hdl_explain_sample(const hdl_model* model, const double* sample,
                                    size_t sample_len,
                                    const hdl_dataset* background,
                                    int background_class, int background_size,
                                    uint64_t background_seed, int target_class) {
  if (model == nullptr || sample == nullptr || background == nullptr) {
    fail(HDL_ERR_INVALID_ARGUMENT, "explanation needs a model, sample and background");
    return nullptr;
  }
  const hdlcnn::ModelConfig& cfg = model->impl.config();
  const std::size_t expected =
      static_cast<std::size_t>(cfg.n_features) * cfg.n_timesteps;
  if (sample_len != expected) {
    fail(HDL_ERR_INVALID_ARGUMENT,
         "sample holds " + std::to_string(sample_len) + " doubles, model expects " +
             std::to_string(expected));
    return nullptr;
  }
  hdl_explanation* explanation = nullptr;
  guarded([&] {
    const std::vector<hdlcnn::Tensor> refs = hdlcnn::draw_background(
        background->impl, background_class, background_size, background_seed);
    hdlcnn::Tensor t({1, cfg.n_features, cfg.n_timesteps},
                     std::vector<double>(sample, sample + sample_len));
    explanation = new hdl_explanation{
        hdlcnn::deep_shap(model->impl, t, refs, target_class)};
    return HDL_OK;
  });
  return explanation;
}

void hdl_explanation_destroy(hdl_explanation* explanation) { delete explanation; }

hdl_status hdl_explanation_contributions(const hdl_explanation* explanation,
                                         double* out, size_t capacity) {
  if (explanation == nullptr || out == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "contributions need an explanation and buffer");
  }
  const hdlcnn::Tensor& c = explanation->impl.contributions;
  if (capacity < c.size()) {
    return fail(HDL_ERR_INVALID_ARGUMENT,
                "buffer holds " + std::to_string(capacity) +
                    " doubles, contributions have " + std::to_string(c.size()));
  }
  std::memcpy(out, c.data(), c.size() * sizeof(double));
  return HDL_OK;
}

double hdl_explanation_output(const hdl_explanation* explanation) {
  return explanation == nullptr ? 0.0 : explanation->impl.output;
}

double hdl_explanation_reference_output(const hdl_explanation* explanation) {
  return explanation == nullptr ? 0.0 : explanation->impl.reference_output;
}

hdl_importance* hdl_importance_create(int use_mean_abs) {
  auto* importance = new hdl_importance;
  importance->mean_abs = use_mean_abs != 0;
  return importance;
}

void hdl_importance_destroy(hdl_importance* importance) { delete importance; }

hdl_status hdl_importance_add(hdl_importance* importance,
                              const hdl_explanation* explanation) {
  if (importance == nullptr || explanation == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "aggregation needs an importance and explanation");
  }
  importance->explanations.push_back(explanation->impl);
  return HDL_OK;
}

int hdl_importance_sample_count(const hdl_importance* importance) {
  return importance == nullptr ? -1
                               : static_cast<int>(importance->explanations.size());
}

namespace {

hdl_status compute_importance(const hdl_importance* importance,
                              hdlcnn::GlobalImportance* out) {
  return guarded([&] {
    *out = hdlcnn::global_importance(importance->explanations,
                                     importance->mean_abs
                                         ? hdlcnn::Aggregation::mean_abs
                                         : hdlcnn::Aggregation::signed_mean);
    return HDL_OK;
  });
}

}  // namespace

hdl_status hdl_importance_values(const hdl_importance* importance, double* out,
                                 size_t capacity) {
  if (importance == nullptr || out == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "values need an importance and buffer");
  }
  hdlcnn::GlobalImportance global;
  const hdl_status status = compute_importance(importance, &global);
  if (status != HDL_OK) return status;
  if (capacity < global.phi.size()) {
    return fail(HDL_ERR_INVALID_ARGUMENT,
                "buffer holds " + std::to_string(capacity) + " doubles, importance has " +
                    std::to_string(global.phi.size()));
  }
  std::memcpy(out, global.phi.data(), global.phi.size() * sizeof(double));
  return HDL_OK;
}

hdl_status hdl_importance_ranking(const hdl_importance* importance, int* out,
                                  size_t capacity) {
  if (importance == nullptr || out == nullptr) {
    return fail(HDL_ERR_INVALID_ARGUMENT, "ranking needs an importance and buffer");
  }
  hdlcnn::GlobalImportance global;
  const hdl_status status = compute_importance(importance, &global);
  if (status != HDL_OK) return status;
  const hdlcnn::RootCause cause = hdlcnn::root_cause(global);
  if (capacity < cause.ranking.size()) {
    return fail(HDL_ERR_INVALID_ARGUMENT,
                "buffer holds " + std::to_string(capacity) + " ints, ranking has " +
                    std::to_string(cause.ranking.size()));
  }
  std::memcpy(out, cause.ranking.data(), cause.ranking.size() * sizeof(int));
  return HDL_OK;
}

int hdl_importance_root_feature(const hdl_importance* importance) {
  if (importance == nullptr) {
    fail(HDL_ERR_INVALID_ARGUMENT, "root cause needs an importance");
    return -1;
  }
  hdlcnn::GlobalImportance global;
  if (compute_importance(importance, &global) != HDL_OK) return -1;
  int root = -1;
  guarded([&] {
    root = hdlcnn::root_cause(global).feature;
    return HDL_OK;
  });
  return root;
}

} /* extern "C" */
