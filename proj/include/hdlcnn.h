/*
 * hdlcnn -- fault detection and root-cause diagnosis for multivariate time
 * series: Ward feature clustering, a two-branch dilated-convolution
 * classifier, and DeepLIFT-based attribution.
 *
 * Plain C surface over the C++ core. Objects are opaque handles with
 * create/destroy pairs; fallible calls return hdl_status (or NULL for
 * constructors) and leave a human-readable message in hdl_last_error().
 */

#ifndef HDLCNN_H
#define HDLCNN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hdl_status {
  HDL_OK = 0,
  HDL_ERR_INVALID_ARGUMENT = 1, /* bad config or arguments */
  HDL_ERR_RUNTIME = 2,          /* failed while executing */
  HDL_ERR_IO = 3,               /* file cannot be opened or written */
  HDL_ERR_BAD_MAGIC = 4,        /* not a model/dataset file */
  HDL_ERR_BAD_VERSION = 5,      /* unsupported format version */
  HDL_ERR_TRUNCATED = 6,        /* file ends mid-structure */
  HDL_ERR_BAD_CHECKSUM = 7,     /* stored CRC-32 does not match */
  HDL_ERR_BAD_MANIFEST = 8      /* malformed or inconsistent manifest */
} hdl_status;

/* Message for the most recent failure on this thread; never NULL. */
const char* hdl_last_error(void);

typedef struct hdl_dataset hdl_dataset;
typedef struct hdl_synth_config hdl_synth_config;
typedef struct hdl_clustering hdl_clustering;
typedef struct hdl_model hdl_model;
typedef struct hdl_metrics hdl_metrics;
typedef struct hdl_explanation hdl_explanation;
typedef struct hdl_importance hdl_importance;

/* ------------------------------------------------------------------ */
/* Synthetic benchmark data                                            */
/* ------------------------------------------------------------------ */

/* Starts with no blocks and no faults; add at least one fault class. */
hdl_synth_config* hdl_synth_config_create(int n_features);
void hdl_synth_config_destroy(hdl_synth_config* config);

hdl_status hdl_synth_config_add_block(hdl_synth_config* config,
                                      const int* features, int count,
                                      double correlation);
/* One coefficient broadcast to all features, or one per feature. */
hdl_status hdl_synth_config_set_ar(hdl_synth_config* config,
                                   const double* coefficients, int count);
hdl_status hdl_synth_config_add_fault(hdl_synth_config* config, const char* name,
                                      int root_feature, double onset_fraction,
                                      double mean_shift,
                                      double variance_multiplier,
                                      double propagation);
hdl_status hdl_synth_config_set_windows(hdl_synth_config* config,
                                        int train_windows, int test_windows,
                                        int width, int stride);
hdl_status hdl_synth_config_set_seed(hdl_synth_config* config, uint64_t seed);

/* Generates normalized train/test splits; both become caller-owned. */
hdl_status hdl_synth_generate(const hdl_synth_config* config,
                              hdl_dataset** train_out, hdl_dataset** test_out);

/* ------------------------------------------------------------------ */
/* Datasets                                                            */
/* ------------------------------------------------------------------ */

hdl_dataset* hdl_dataset_load(const char* path);
hdl_status hdl_dataset_save(const hdl_dataset* dataset, const char* path);
void hdl_dataset_destroy(hdl_dataset* dataset);

int hdl_dataset_sample_count(const hdl_dataset* dataset);
int hdl_dataset_feature_count(const hdl_dataset* dataset);
int hdl_dataset_timestep_count(const hdl_dataset* dataset);
int hdl_dataset_class_count(const hdl_dataset* dataset);
/* Valid until the dataset is destroyed. */
const char* hdl_dataset_class_name(const hdl_dataset* dataset, int class_index);
int hdl_dataset_label(const hdl_dataset* dataset, int sample);
/* Row-major [feature][timestep]; capacity in doubles. */
hdl_status hdl_dataset_copy_sample(const hdl_dataset* dataset, int sample,
                                   double* out, size_t capacity);

/* ------------------------------------------------------------------ */
/* Feature clustering                                                  */
/* ------------------------------------------------------------------ */

/* Ward linkage over the dataset's feature columns, cut into two clusters. */
hdl_clustering* hdl_cluster_features(const hdl_dataset* dataset);
void hdl_clustering_destroy(hdl_clustering* clustering);

int hdl_clustering_merge_count(const hdl_clustering* clustering);
hdl_status hdl_clustering_merge_step(const hdl_clustering* clustering, int step,
                                     int* id_a, int* id_b, double* distance,
                                     int* size);
/* Reordered feature ids; capacity in ints. */
hdl_status hdl_clustering_permutation(const hdl_clustering* clustering, int* out,
                                      size_t capacity);
int hdl_clustering_boundary(const hdl_clustering* clustering);

/* ------------------------------------------------------------------ */
/* Model                                                               */
/* ------------------------------------------------------------------ */

typedef struct hdl_model_config {
  int conv1_channels;
  int conv2_channels;
  int kernel_h;
  int kernel_w;
  int dilation;
  int pool_h;
  int pool_w;
  int use_relu; /* 0 disables the nonlinearity (diagnostics only) */
  uint64_t seed;
} hdl_model_config;

/* 16/32 channels, 3x3 kernels, dilation 2, 2x2 pool, relu, seed 0. */
void hdl_model_config_init(hdl_model_config* config);

/* Shapes come from the dataset; the permutation/boundary from clustering
 * (or hdl_clustering_* of an identity layout). */
hdl_model* hdl_model_create(const hdl_dataset* train,
                            const hdl_model_config* config,
                            const int* permutation, int permutation_len,
                            int boundary);
void hdl_model_destroy(hdl_model* model);

hdl_model* hdl_model_load(const char* path);
hdl_status hdl_model_save(const hdl_model* model, const char* path);

int hdl_model_feature_count(const hdl_model* model);
int hdl_model_timestep_count(const hdl_model* model);
int hdl_model_class_count(const hdl_model* model);
int hdl_model_boundary(const hdl_model* model);
hdl_status hdl_model_permutation(const hdl_model* model, int* out,
                                 size_t capacity);

typedef struct hdl_train_config {
  int epochs;
  int batch_size;
  double learning_rate;
  int use_sgd; /* 0 = Adam */
  uint64_t shuffle_seed;
} hdl_train_config;

/* 30 epochs, batch 32, Adam at 1e-3, shuffle seed 0. */
void hdl_train_config_init(hdl_train_config* config);

/* loss_out/accuracy_out, when non-NULL, receive one value per epoch. */
hdl_status hdl_model_train(hdl_model* model, const hdl_dataset* train,
                           const hdl_train_config* config, double* loss_out,
                           double* accuracy_out);

/* sample: row-major [feature][timestep]; probabilities: one per class. */
hdl_status hdl_model_predict(const hdl_model* model, const double* sample,
                             size_t sample_len, double* probabilities,
                             size_t capacity);

/* ------------------------------------------------------------------ */
/* Evaluation                                                          */
/* ------------------------------------------------------------------ */

hdl_metrics* hdl_model_evaluate(const hdl_model* model,
                                const hdl_dataset* dataset);
void hdl_metrics_destroy(hdl_metrics* metrics);

double hdl_metrics_accuracy(const hdl_metrics* metrics);
/* Recall of one class; -1 when the class is absent from the data. */
double hdl_metrics_class_accuracy(const hdl_metrics* metrics, int class_index);
int hdl_metrics_confusion(const hdl_metrics* metrics, int true_class,
                          int predicted_class);
int hdl_metrics_sample_count(const hdl_metrics* metrics);

/* ------------------------------------------------------------------ */
/* Attribution                                                         */
/* ------------------------------------------------------------------ */

/* DeepLIFT attribution of the target class logit, averaged over a seeded
 * background draw of `background_size` samples of `background_class` (the
 * usual choice: the normal class of the training set). */
hdl_explanation* hdl_explain_sample(const hdl_model* model, const double* sample,
                                    size_t sample_len,
                                    const hdl_dataset* background,
                                    int background_class, int background_size,
                                    uint64_t background_seed, int target_class);
void hdl_explanation_destroy(hdl_explanation* explanation);

/* Row-major [feature][timestep] contribution map in original row order. */
hdl_status hdl_explanation_contributions(const hdl_explanation* explanation,
                                         double* out, size_t capacity);
double hdl_explanation_output(const hdl_explanation* explanation);
double hdl_explanation_reference_output(const hdl_explanation* explanation);

/* Aggregates explanations into per-feature importance. */
hdl_importance* hdl_importance_create(int use_mean_abs);
void hdl_importance_destroy(hdl_importance* importance);
hdl_status hdl_importance_add(hdl_importance* importance,
                              const hdl_explanation* explanation);
int hdl_importance_sample_count(const hdl_importance* importance);
hdl_status hdl_importance_values(const hdl_importance* importance, double* out,
                                 size_t capacity);
/* Feature ids, most important first. */
hdl_status hdl_importance_ranking(const hdl_importance* importance, int* out,
                                  size_t capacity);
/* The diagnosed root-cause feature (top of the ranking); negative on error. */
int hdl_importance_root_feature(const hdl_importance* importance);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* HDLCNN_H */
