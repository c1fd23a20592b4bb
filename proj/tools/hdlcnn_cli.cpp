// Command-line pipeline driver: simulate -> cluster -> train -> evaluate ->
// explain. All state flows through files; every stage is deterministic given
// the config (seeds included), so reruns are byte-identical. Talks to the
// engine exclusively through the public C interface.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hdlcnn.h"

using nlohmann::json;

namespace {

// Exit contract: 0 success, 1 runtime/data error, 2 config error.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] void fail_run(const std::string& context) {
  throw RunError(context + ": " + hdl_last_error());
}

// ---------------------------------------------------------------------------
// Config document: built-in defaults, file overlay, dotted-key overrides.
// ---------------------------------------------------------------------------

json default_config() {
  return json{
      {"seed", 0},
      {"paths",
       {{"train_data", "out/train.bin"},
        {"test_data", "out/test.bin"},
        {"ground_truth", "out/ground_truth.json"},
        {"dendrogram", "out/dendrogram.csv"},
        {"ordering", "out/ordering.json"},
        {"model", "out/model.bin"},
        {"history", "out/history.csv"},
        {"metrics", "out/metrics.json"},
        {"confusion", "out/confusion.csv"},
        {"explain_dir", "out/explanations"}}},
      {"synth",
       {{"features", 12},
        {"blocks",
         json::array({{{"features", {0, 1, 2, 3, 4, 5}}, {"correlation", 0.9}},
                      {{"features", {6, 7, 8, 9, 10, 11}}, {"correlation", 0.9}}})},
        {"ar", json::array({0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8,
                            0.8, 0.8})},
        {"faults",
         json::array(
             {{{"name", "mean_shift"},
               {"root_feature", 2},
               {"onset_fraction", 0.3},
               {"mean_shift", 3.0},
               {"variance_multiplier", 1.0},
               {"propagation", 0.4}},
              {{"name", "variance"},
               {"root_feature", 8},
               {"onset_fraction", 0.3},
               {"mean_shift", 0.0},
               {"variance_multiplier", 4.0},
               {"propagation", 0.4}}})},
        {"train_windows", 600},
        {"test_windows", 300},
        {"window_width", 20},
        {"window_stride", 20}}},
      {"model",
       {{"conv1_channels", 16},
        {"conv2_channels", 32},
        {"kernel_h", 2},
        {"kernel_w", 2},
        {"dilation", 2},
        {"pool_h", 2},
        {"pool_w", 2},
        {"activation", "relu"}}},
      {"train",
       {{"epochs", 30},
        {"batch_size", 32},
        {"learning_rate", 1e-3},
        {"optimizer", "adam"}}},
      {"explain",
       {{"target_class", 1},
        {"background_class", 0},
        {"background_size", 100},
        {"aggregation", "mean_abs"},
        {"heatmap_svg", false},
        {"max_samples", 0}}}};
}

void merge_overlay(json& base, const json& overlay, const std::string& prefix) {
  if (!overlay.is_object()) {
    throw ConfigError("config section '" +
                      (prefix.empty() ? "(root)" : prefix) +
                      "' must be an object");
  }
  for (const auto& [key, value] : overlay.items()) {
    if (!base.contains(key)) {
      throw ConfigError("unknown config key: " + prefix + key);
    }
    if (base[key].is_object() && value.is_object()) {
      merge_overlay(base[key], value, prefix + key + ".");
    } else {
      base[key] = value;
    }
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value, got '" +
                      assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json* node = &config;
  std::size_t start = 0;
  std::vector<std::string> parts;
  while (true) {
    const auto dot = path.find('.', start);
    parts.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) {
      throw ConfigError("unknown config key: " + path);
    }
    node = &(*node)[parts[i]];
  }
  const std::string& leaf = parts.back();
  if (!node->contains(leaf)) {
    throw ConfigError("unknown config key: " + path);
  }
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // plain string
  (*node)[leaf] = value;
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = 0;
  bool seed_given = false;
};

json load_config(const CommonArgs& args) {
  json config = default_config();
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in.good()) {
      throw RunError("cannot open config file " + args.config_path);
    }
    json overlay = json::parse(in, nullptr, false);
    if (overlay.is_discarded()) {
      throw ConfigError("config file " + args.config_path + " is not valid JSON");
    }
    merge_overlay(config, overlay, "");
  }
  for (const std::string& assignment : args.overrides) {
    apply_override(config, assignment);
  }
  if (args.seed_given) config["seed"] = args.seed;
  return config;
}

template <typename T>
T field(const json& config, const std::string& section, const std::string& key) {
  try {
    return config.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config field " + section + "." + key + ": " + e.what());
  }
}

std::string path_field(const json& config, const std::string& key) {
  return field<std::string>(config, "paths", key);
}

// Seed streams per stage, all derived from the one config seed.
std::uint64_t stage_seed(const json& config, std::uint64_t offset) {
  const auto base = config.at("seed").get<std::int64_t>();
  return static_cast<std::uint64_t>(base) + offset;
}

// ---------------------------------------------------------------------------
// Atomic text output: write a temp file in the target directory, then rename.
// ---------------------------------------------------------------------------

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) {
    std::filesystem::create_directories(target.parent_path());
  }
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out.good()) throw RunError("cannot write " + tmp.string());
    out << text;
    if (!out.good()) throw RunError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

std::string format_double(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

void ensure_parent(const std::string& path) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) {
    std::filesystem::create_directories(target.parent_path());
  }
}

// ---------------------------------------------------------------------------
// RAII wrappers over the C handles.
// ---------------------------------------------------------------------------

using DatasetPtr = std::unique_ptr<hdl_dataset, decltype(&hdl_dataset_destroy)>;
using SynthPtr =
    std::unique_ptr<hdl_synth_config, decltype(&hdl_synth_config_destroy)>;
using ClusteringPtr =
    std::unique_ptr<hdl_clustering, decltype(&hdl_clustering_destroy)>;
using ModelPtr = std::unique_ptr<hdl_model, decltype(&hdl_model_destroy)>;
using MetricsPtr = std::unique_ptr<hdl_metrics, decltype(&hdl_metrics_destroy)>;
using ExplanationPtr =
    std::unique_ptr<hdl_explanation, decltype(&hdl_explanation_destroy)>;
using ImportancePtr =
    std::unique_ptr<hdl_importance, decltype(&hdl_importance_destroy)>;

DatasetPtr load_dataset_file(const std::string& path) {
  hdl_dataset* dataset = hdl_dataset_load(path.c_str());
  if (dataset == nullptr) fail_run("cannot load dataset " + path);
  return DatasetPtr(dataset, hdl_dataset_destroy);
}

ModelPtr load_model_file(const std::string& path) {
  hdl_model* model = hdl_model_load(path.c_str());
  if (model == nullptr) fail_run("cannot load model " + path);
  return ModelPtr(model, hdl_model_destroy);
}

// ---------------------------------------------------------------------------
// simulate: generate the synthetic benchmark and its ground truth.
// ---------------------------------------------------------------------------

int cmd_simulate(const json& config) {
  const json& synth = config.at("synth");

  SynthPtr builder(hdl_synth_config_create(field<int>(config, "synth", "features")),
                   hdl_synth_config_destroy);
  if (!builder) throw ConfigError(hdl_last_error());

  try {
    for (const json& block : synth.at("blocks")) {
      const std::vector<int> features = block.at("features").get<std::vector<int>>();
      const double correlation = block.at("correlation").get<double>();
      if (hdl_synth_config_add_block(builder.get(), features.data(),
                                     static_cast<int>(features.size()),
                                     correlation) != HDL_OK) {
        throw ConfigError(hdl_last_error());
      }
    }
    const std::vector<double> ar = synth.at("ar").get<std::vector<double>>();
    if (hdl_synth_config_set_ar(builder.get(), ar.data(),
                                static_cast<int>(ar.size())) != HDL_OK) {
      throw ConfigError(hdl_last_error());
    }
    for (const json& fault : synth.at("faults")) {
      if (hdl_synth_config_add_fault(
              builder.get(), fault.at("name").get<std::string>().c_str(),
              fault.at("root_feature").get<int>(),
              fault.at("onset_fraction").get<double>(),
              fault.at("mean_shift").get<double>(),
              fault.at("variance_multiplier").get<double>(),
              fault.at("propagation").get<double>()) != HDL_OK) {
        throw ConfigError(hdl_last_error());
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config section synth: ") + e.what());
  }
  if (hdl_synth_config_set_windows(builder.get(),
                                   field<int>(config, "synth", "train_windows"),
                                   field<int>(config, "synth", "test_windows"),
                                   field<int>(config, "synth", "window_width"),
                                   field<int>(config, "synth", "window_stride")) !=
      HDL_OK) {
    throw ConfigError(hdl_last_error());
  }
  hdl_synth_config_set_seed(builder.get(), stage_seed(config, 0));

  hdl_dataset* train_raw = nullptr;
  hdl_dataset* test_raw = nullptr;
  const hdl_status status = hdl_synth_generate(builder.get(), &train_raw, &test_raw);
  if (status == HDL_ERR_INVALID_ARGUMENT) throw ConfigError(hdl_last_error());
  if (status != HDL_OK) fail_run("generation failed");
  DatasetPtr train(train_raw, hdl_dataset_destroy);
  DatasetPtr test(test_raw, hdl_dataset_destroy);

  const std::string train_path = path_field(config, "train_data");
  const std::string test_path = path_field(config, "test_data");
  ensure_parent(train_path);
  ensure_parent(test_path);
  if (hdl_dataset_save(train.get(), train_path.c_str()) != HDL_OK) {
    fail_run("cannot save " + train_path);
  }
  if (hdl_dataset_save(test.get(), test_path.c_str()) != HDL_OK) {
    fail_run("cannot save " + test_path);
  }

  json truth;
  truth["class_names"] = json::array();
  truth["root_features"] = json::array();
  truth["class_names"].push_back("normal");
  truth["root_features"].push_back(-1);
  for (const json& fault : synth.at("faults")) {
    truth["class_names"].push_back(fault.at("name"));
    truth["root_features"].push_back(fault.at("root_feature"));
  }
  write_text_atomic(path_field(config, "ground_truth"), truth.dump(2) + "\n");

  std::cout << "wrote " << train_path << " (" << hdl_dataset_sample_count(train.get())
            << " samples), " << test_path << " ("
            << hdl_dataset_sample_count(test.get()) << " samples)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// cluster: dendrogram CSV + feature ordering JSON from the training data.
// ---------------------------------------------------------------------------

int cmd_cluster(const json& config) {
  const DatasetPtr train = load_dataset_file(path_field(config, "train_data"));

  ClusteringPtr clustering(hdl_cluster_features(train.get()),
                           hdl_clustering_destroy);
  if (!clustering) fail_run("clustering failed");

  std::ostringstream dendrogram;
  dendrogram << "step,id_a,id_b,distance,size\n";
  const int merges = hdl_clustering_merge_count(clustering.get());
  for (int step = 0; step < merges; ++step) {
    int id_a = 0, id_b = 0, size = 0;
    double distance = 0.0;
    hdl_clustering_merge_step(clustering.get(), step, &id_a, &id_b, &distance,
                              &size);
    dendrogram << step << ',' << id_a << ',' << id_b << ','
               << format_double(distance) << ',' << size << '\n';
  }
  write_text_atomic(path_field(config, "dendrogram"), dendrogram.str());

  const int p = hdl_dataset_feature_count(train.get());
  std::vector<int> permutation(static_cast<std::size_t>(p));
  if (hdl_clustering_permutation(clustering.get(), permutation.data(),
                                 permutation.size()) != HDL_OK) {
    fail_run("cannot read permutation");
  }
  json ordering;
  ordering["permutation"] = permutation;
  ordering["boundary"] = hdl_clustering_boundary(clustering.get());
  write_text_atomic(path_field(config, "ordering"), ordering.dump(2) + "\n");

  std::cout << "wrote " << path_field(config, "dendrogram") << " and "
            << path_field(config, "ordering") << " (boundary "
            << hdl_clustering_boundary(clustering.get()) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train: apply the stored ordering, fit the classifier, save model + history.
// ---------------------------------------------------------------------------

hdl_model_config model_config_from(const json& config) {
  hdl_model_config mc;
  hdl_model_config_init(&mc);
  mc.conv1_channels = field<int>(config, "model", "conv1_channels");
  mc.conv2_channels = field<int>(config, "model", "conv2_channels");
  mc.kernel_h = field<int>(config, "model", "kernel_h");
  mc.kernel_w = field<int>(config, "model", "kernel_w");
  mc.dilation = field<int>(config, "model", "dilation");
  mc.pool_h = field<int>(config, "model", "pool_h");
  mc.pool_w = field<int>(config, "model", "pool_w");
  const std::string activation = field<std::string>(config, "model", "activation");
  if (activation == "relu") {
    mc.use_relu = 1;
  } else if (activation == "none") {
    mc.use_relu = 0;
  } else {
    throw ConfigError("model.activation must be 'relu' or 'none', got '" +
                      activation + "'");
  }
  mc.seed = stage_seed(config, 1);
  return mc;
}

int cmd_train(const json& config) {
  const DatasetPtr train = load_dataset_file(path_field(config, "train_data"));

  const std::string ordering_path = path_field(config, "ordering");
  std::ifstream in(ordering_path);
  if (!in.good()) throw RunError("cannot open ordering file " + ordering_path);
  json ordering = json::parse(in, nullptr, false);
  if (ordering.is_discarded() || !ordering.contains("permutation") ||
      !ordering.contains("boundary")) {
    throw RunError("ordering file " + ordering_path +
                   " lacks permutation/boundary");
  }
  const std::vector<int> permutation =
      ordering.at("permutation").get<std::vector<int>>();
  const int boundary = ordering.at("boundary").get<int>();
  if (static_cast<int>(permutation.size()) !=
      hdl_dataset_feature_count(train.get())) {
    throw RunError("ordering lists " + std::to_string(permutation.size()) +
                   " features, dataset has " +
                   std::to_string(hdl_dataset_feature_count(train.get())));
  }

  const hdl_model_config mc = model_config_from(config);
  ModelPtr model(hdl_model_create(train.get(), &mc, permutation.data(),
                                  static_cast<int>(permutation.size()), boundary),
                 hdl_model_destroy);
  if (!model) fail_run("cannot build model");

  hdl_train_config tc;
  hdl_train_config_init(&tc);
  tc.epochs = field<int>(config, "train", "epochs");
  tc.batch_size = field<int>(config, "train", "batch_size");
  tc.learning_rate = field<double>(config, "train", "learning_rate");
  if (tc.epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (tc.batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (tc.learning_rate < 0.0) {
    throw ConfigError("train.learning_rate must be non-negative");
  }
  const std::string optimizer = field<std::string>(config, "train", "optimizer");
  if (optimizer == "sgd") {
    tc.use_sgd = 1;
  } else if (optimizer == "adam") {
    tc.use_sgd = 0;
  } else {
    throw ConfigError("train.optimizer must be 'adam' or 'sgd', got '" +
                      optimizer + "'");
  }
  tc.shuffle_seed = stage_seed(config, 2);

  std::vector<double> loss(static_cast<std::size_t>(tc.epochs), 0.0);
  std::vector<double> accuracy(static_cast<std::size_t>(tc.epochs), 0.0);
  if (hdl_model_train(model.get(), train.get(), &tc, loss.data(),
                      accuracy.data()) != HDL_OK) {
    fail_run("training failed");
  }

  const std::string model_path = path_field(config, "model");
  ensure_parent(model_path);
  if (hdl_model_save(model.get(), model_path.c_str()) != HDL_OK) {
    fail_run("cannot save " + model_path);
  }

  std::ostringstream history;
  history << "epoch,loss,train_accuracy\n";
  for (int e = 0; e < tc.epochs; ++e) {
    history << (e + 1) << ',' << format_double(loss[static_cast<std::size_t>(e)])
            << ',' << format_double(accuracy[static_cast<std::size_t>(e)])
            << '\n';
  }
  write_text_atomic(path_field(config, "history"), history.str());

  std::cout << "wrote " << model_path << " (final loss "
            << format_double(loss.back()) << ", train accuracy "
            << format_double(accuracy.back()) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate: metrics JSON + confusion CSV on the held-out split.
// ---------------------------------------------------------------------------

int cmd_evaluate(const json& config) {
  const ModelPtr model = load_model_file(path_field(config, "model"));
  const DatasetPtr test = load_dataset_file(path_field(config, "test_data"));

  MetricsPtr metrics(hdl_model_evaluate(model.get(), test.get()),
                     hdl_metrics_destroy);
  if (!metrics) fail_run("evaluation failed");

  const int k = hdl_dataset_class_count(test.get());
  json out;
  out["accuracy"] = hdl_metrics_accuracy(metrics.get());
  out["n_samples"] = hdl_metrics_sample_count(metrics.get());
  out["class_names"] = json::array();
  out["per_class_accuracy"] = json::array();
  for (int c = 0; c < k; ++c) {
    out["class_names"].push_back(hdl_dataset_class_name(test.get(), c));
    out["per_class_accuracy"].push_back(
        hdl_metrics_class_accuracy(metrics.get(), c));
  }
  write_text_atomic(path_field(config, "metrics"), out.dump(2) + "\n");

  std::ostringstream confusion;
  confusion << "true_class";
  for (int c = 0; c < k; ++c) {
    confusion << ',' << hdl_dataset_class_name(test.get(), c);
  }
  confusion << '\n';
  for (int t = 0; t < k; ++t) {
    confusion << hdl_dataset_class_name(test.get(), t);
    for (int p = 0; p < k; ++p) {
      confusion << ',' << hdl_metrics_confusion(metrics.get(), t, p);
    }
    confusion << '\n';
  }
  write_text_atomic(path_field(config, "confusion"), confusion.str());

  std::cout << "accuracy " << format_double(hdl_metrics_accuracy(metrics.get()))
            << " over " << hdl_metrics_sample_count(metrics.get())
            << " samples\n";
  return 0;
}

// ---------------------------------------------------------------------------
// explain: per-sample contribution CSVs, importance JSON, optional SVG maps.
// ---------------------------------------------------------------------------

std::string heatmap_svg(const std::vector<double>& cells, int rows, int cols) {
  double peak = 0.0;
  for (double v : cells) peak = std::max(peak, std::abs(v));
  const int cell = 16;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * cell
      << "\" height=\"" << rows * cell << "\">\n";
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = cells[static_cast<std::size_t>(r) * cols + c];
      // Symmetric blue-white-red map around zero.
      const double unit = peak > 0.0 ? v / peak : 0.0;
      int red = 255, green = 255, blue = 255;
      if (unit > 0.0) {
        green = blue = static_cast<int>(std::lround(255.0 * (1.0 - unit)));
      } else if (unit < 0.0) {
        red = green = static_cast<int>(std::lround(255.0 * (1.0 + unit)));
      }
      svg << "<rect x=\"" << c * cell << "\" y=\"" << r * cell << "\" width=\""
          << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << red << ','
          << green << ',' << blue << ")\"/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

int cmd_explain(const json& config) {
  const ModelPtr model = load_model_file(path_field(config, "model"));
  const DatasetPtr train = load_dataset_file(path_field(config, "train_data"));
  const DatasetPtr test = load_dataset_file(path_field(config, "test_data"));

  const int target = field<int>(config, "explain", "target_class");
  const int background_class = field<int>(config, "explain", "background_class");
  const int background_size = field<int>(config, "explain", "background_size");
  const std::string aggregation =
      field<std::string>(config, "explain", "aggregation");
  if (aggregation != "mean_abs" && aggregation != "signed_mean") {
    throw ConfigError(
        "explain.aggregation must be 'mean_abs' or 'signed_mean', got '" +
        aggregation + "'");
  }
  const bool want_svg = field<bool>(config, "explain", "heatmap_svg");
  const int max_samples = field<int>(config, "explain", "max_samples");
  if (target < 0 || target >= hdl_dataset_class_count(test.get())) {
    throw ConfigError("explain.target_class " + std::to_string(target) +
                      " is outside the dataset's " +
                      std::to_string(hdl_dataset_class_count(test.get())) +
                      " classes");
  }
  if (background_class < 0 ||
      background_class >= hdl_dataset_class_count(train.get())) {
    throw ConfigError("explain.background_class " +
                      std::to_string(background_class) +
                      " is outside the dataset's " +
                      std::to_string(hdl_dataset_class_count(train.get())) +
                      " classes");
  }
  if (background_size < 1) {
    throw ConfigError("explain.background_size must be at least 1");
  }

  std::vector<int> chosen;
  for (int i = 0; i < hdl_dataset_sample_count(test.get()); ++i) {
    if (hdl_dataset_label(test.get(), i) == target) chosen.push_back(i);
  }
  if (chosen.empty()) {
    throw RunError("test split has no samples of class " + std::to_string(target));
  }
  if (max_samples > 0 && static_cast<int>(chosen.size()) > max_samples) {
    chosen.resize(static_cast<std::size_t>(max_samples));
  }

  const int p = hdl_dataset_feature_count(test.get());
  const int t = hdl_dataset_timestep_count(test.get());
  const std::string dir = path_field(config, "explain_dir");
  std::filesystem::create_directories(dir);

  ImportancePtr importance(hdl_importance_create(aggregation == "mean_abs" ? 1 : 0),
                           hdl_importance_destroy);

  std::vector<double> sample(static_cast<std::size_t>(p) * t, 0.0);
  std::vector<double> cells(static_cast<std::size_t>(p) * t, 0.0);
  for (int index : chosen) {
    if (hdl_dataset_copy_sample(test.get(), index, sample.data(),
                                sample.size()) != HDL_OK) {
      fail_run("cannot read sample " + std::to_string(index));
    }
    ExplanationPtr explanation(
        hdl_explain_sample(model.get(), sample.data(), sample.size(),
                           train.get(), background_class, background_size,
                           stage_seed(config, 3), target),
        hdl_explanation_destroy);
    if (!explanation) fail_run("attribution failed on sample " + std::to_string(index));
    if (hdl_explanation_contributions(explanation.get(), cells.data(),
                                      cells.size()) != HDL_OK) {
      fail_run("cannot read contributions");
    }

    std::ostringstream csv;
    csv << "feature";
    for (int tau = 0; tau < t; ++tau) csv << ',' << tau;
    csv << '\n';
    for (int f = 0; f < p; ++f) {
      csv << f;
      for (int tau = 0; tau < t; ++tau) {
        csv << ',' << format_double(cells[static_cast<std::size_t>(f) * t + tau]);
      }
      csv << '\n';
    }
    write_text_atomic(dir + "/sample_" + std::to_string(index) + ".csv",
                      csv.str());
    if (want_svg) {
      write_text_atomic(dir + "/sample_" + std::to_string(index) + ".svg",
                        heatmap_svg(cells, p, t));
    }
    hdl_importance_add(importance.get(), explanation.get());
  }

  std::vector<double> values(static_cast<std::size_t>(p), 0.0);
  std::vector<int> ranking(static_cast<std::size_t>(p), 0);
  if (hdl_importance_values(importance.get(), values.data(), values.size()) !=
          HDL_OK ||
      hdl_importance_ranking(importance.get(), ranking.data(), ranking.size()) !=
          HDL_OK) {
    fail_run("cannot aggregate importance");
  }
  const int root = hdl_importance_root_feature(importance.get());

  json out;
  out["target_class"] = target;
  out["aggregation"] = aggregation;
  out["n_samples"] = static_cast<int>(chosen.size());
  out["values"] = values;
  out["ranking"] = ranking;
  out["root_cause"] = root;
  write_text_atomic(dir + "/importance.json", out.dump(2) + "\n");

  std::cout << "explained " << chosen.size() << " samples of class " << target
            << "; root cause feature " << root << '\n';
  return 0;
}

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "JSON config file");
  sub->add_option("--set", args.overrides,
                  "dotted-key config override, e.g. train.epochs=5");
  sub->add_option("--seed", args.seed, "global seed override")
      ->each([&args](const std::string&) { args.seed_given = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Fault diagnosis pipeline: correlated-feature clustering, dilated-"
      "convolution classification and root-cause attribution"};
  app.require_subcommand(1);

  CommonArgs args;
  int (*handler)(const json&) = nullptr;

  struct SubSpec {
    const char* name;
    const char* help;
    int (*fn)(const json&);
  };
  const SubSpec specs[] = {
      {"simulate", "generate the synthetic benchmark datasets", &cmd_simulate},
      {"cluster", "cluster features and derive the input ordering",
       &cmd_cluster},
      {"train", "train the classifier and save it", &cmd_train},
      {"evaluate", "score the model on the held-out split", &cmd_evaluate},
      {"explain", "attribute predictions and rank root causes", &cmd_explain},
  };
  for (const SubSpec& spec : specs) {
    CLI::App* sub = app.add_subcommand(spec.name, spec.help);
    add_common(sub, args);
    sub->callback([&handler, fn = spec.fn] { handler = fn; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    const json config = load_config(args);
    return handler(config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const RunError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
