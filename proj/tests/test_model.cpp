#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "io.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace hdlcnn;

namespace {

std::filesystem::path temp_dir() {
  static const std::filesystem::path dir = [] {
    auto d = std::filesystem::temp_directory_path() / "hdlcnn_model_tests";
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

ModelConfig reference_config() {
  ModelConfig config;  // 22 features, 20 timesteps, 11 classes, 3x3 kernels
  return config;
}

// Small, fast architecture for training-behavior tests.
ModelConfig small_config() {
  ModelConfig config;
  config.n_features = 8;
  config.n_timesteps = 12;
  config.n_classes = 2;
  config.conv1_channels = 4;
  config.conv2_channels = 6;
  config.kernel_h = 2;
  config.kernel_w = 2;
  config.dilation = 2;
  config.pool_h = 2;
  config.pool_w = 2;
  return config;
}

Tensor random_sample(const ModelConfig& config, Rng& rng) {
  Tensor t({1, config.n_features, config.n_timesteps});
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(0.0, 1.0);
  return t;
}

Dataset tiny_dataset(const ModelConfig& config, int per_class, Rng& rng) {
  Dataset data;
  for (int c = 0; c < config.n_classes; ++c) {
    data.class_names.push_back("class_" + std::to_string(c));
  }
  data.norm_stats.min.assign(config.n_features, 0.0);
  data.norm_stats.max.assign(config.n_features, 1.0);
  data.norm_stats.degenerate.assign(config.n_features, false);
  for (int c = 0; c < config.n_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      Tensor s = random_sample(config, rng);
      // Separate the classes crudely so memorization has signal.
      for (std::size_t k = 0; k < s.size(); ++k) s.data()[k] += 0.8 * c;
      data.samples.push_back(s);
      data.labels.push_back(c);
    }
  }
  return data;
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("reference architecture reproduces the stage-by-stage shape ledger") {
  const ModelConfig config = reference_config();
  const HdlcnnModel model = build_model(config, identity_ordering(22));
  const LayerShapes& s = model.layer_shapes();

  CHECK(s.segment1 == std::vector<int>{1, 11, 20});
  CHECK(s.segment2 == std::vector<int>{1, 11, 20});
  CHECK(s.conv1_out1 == std::vector<int>{16, 7, 16});
  CHECK(s.conv1_out2 == std::vector<int>{16, 7, 16});
  CHECK(s.concat == std::vector<int>{16, 14, 16});
  CHECK(s.conv2_out == std::vector<int>{32, 10, 12});
  CHECK(s.pool_out == std::vector<int>{32, 5, 6});
  CHECK(s.flatten == 960);
  CHECK(s.output == 11);

  // The live forward pass produces the same intermediate shapes.
  Rng rng(3);
  const Tensor sample = random_sample(config, rng);
  const ForwardTrace trace = model.trace(sample);
  CHECK(trace.conv1a_pre.shape() == std::vector<int>{16, 7, 16});
  CHECK(trace.concat.shape() == std::vector<int>{16, 14, 16});
  CHECK(trace.conv2_pre.shape() == std::vector<int>{32, 10, 12});
  CHECK(trace.pooled.shape() == std::vector<int>{32, 5, 6});
  CHECK(trace.flat.shape() == std::vector<int>{960});
  CHECK(trace.logits.shape() == std::vector<int>{11});
}

TEST_CASE("architectures whose segments cannot feed the kernels are rejected") {
  // 12 features split 5/7 under a 3x3 kernel at dilation 2 (extent 5):
  // the branches emit heights 1 and 3, the concatenation height 4 cannot
  // feed the second convolution.
  ModelConfig config = reference_config();
  config.n_features = 12;
  FeatureOrdering ordering = identity_ordering(12);
  ordering.boundary = 5;
  CHECK_THROWS_WITH_AS(build_model(config, ordering),
                       doctest::Contains("concatenated"), std::invalid_argument);

  // A segment shorter than the kernel extent fails earlier, naming the side.
  ModelConfig narrow = reference_config();
  narrow.n_features = 8;
  CHECK_THROWS_WITH_AS(build_model(narrow, identity_ordering(8)),
                       doctest::Contains("segment"), std::invalid_argument);

  ModelConfig small = small_config();
  FeatureOrdering bad = identity_ordering(8);
  bad.boundary = 0;
  CHECK_THROWS_AS(build_model(small, bad), std::invalid_argument);
  bad.boundary = 8;
  CHECK_THROWS_AS(build_model(small, bad), std::invalid_argument);
  bad.boundary = 4;
  bad.permutation[0] = 7;  // duplicate entry
  CHECK_THROWS_AS(build_model(small, bad), std::invalid_argument);
}

TEST_CASE("initialization is seed-deterministic") {
  ModelConfig config = small_config();
  config.seed = 99;
  const HdlcnnModel a = build_model(config, identity_ordering(8));
  const HdlcnnModel b = build_model(config, identity_ordering(8));
  const auto pa = a.named_parameters();
  const auto pb = b.named_parameters();
  REQUIRE(pa.size() == pb.size());
  REQUIRE(pa.size() == 8);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second->values() == pb[i].second->values());
  }

  config.seed = 100;
  const HdlcnnModel c = build_model(config, identity_ordering(8));
  bool any_diff = false;
  const auto pc = c.named_parameters();
  for (std::size_t i = 0; i < pa.size() && !any_diff; ++i) {
    any_diff = pa[i].second->values() != pc[i].second->values();
  }
  CHECK(any_diff);
}

TEST_CASE("probabilities are a proper distribution and repeatable") {
  Rng rng(5);
  const ModelConfig config = small_config();
  const HdlcnnModel model = build_model(config, identity_ordering(8));
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor sample = random_sample(config, rng);
    const Tensor probs = model.probabilities(sample);
    REQUIRE(probs.shape() == std::vector<int>{2});
    double sum = 0.0;
    for (int k = 0; k < 2; ++k) {
      CHECK(probs.at(k) >= 0.0);
      sum += probs.at(k);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    CHECK(model.probabilities(sample).values() == probs.values());

    const Tensor logits = model.logits(sample);
    const int argmax = logits.at(0) >= logits.at(1) ? 0 : 1;
    CHECK(model.predict(sample) == argmax);
  }
}

TEST_CASE("the model rejects samples of the wrong shape") {
  const HdlcnnModel model = build_model(small_config(), identity_ordering(8));
  CHECK_THROWS_AS(model.logits(Tensor({1, 7, 12})), std::invalid_argument);
  CHECK_THROWS_AS(model.logits(Tensor({1, 8, 13})), std::invalid_argument);
  CHECK_THROWS_AS(model.logits(Tensor({8, 12})), std::invalid_argument);
}

TEST_CASE("full-model gradient check stays under the relaxed bound") {
  ModelConfig config = small_config();
  config.seed = 31;
  HdlcnnModel model = build_model(config, identity_ordering(8));
  Rng rng(32);
  const Tensor sample = random_sample(config, rng);
  CHECK(grad_check(model, sample, 1e-5) < 1e-4);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  ModelConfig config = small_config();
  Rng rng(7);
  const Dataset data = tiny_dataset(config, 3, rng);
  HdlcnnModel model = build_model(config, identity_ordering(8));
  std::vector<std::vector<double>> before;
  for (const auto& [name, tensor] : std::as_const(model).named_parameters()) {
    before.push_back(tensor->values());
  }
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.learning_rate = 0.0;
  train_model(model, data, tc);
  std::size_t idx = 0;
  for (const auto& [name, tensor] : std::as_const(model).named_parameters()) {
    CHECK(tensor->values() == before[idx++]);
  }
}

TEST_CASE("a single sample is memorized") {
  ModelConfig config = small_config();
  config.seed = 11;
  Rng rng(12);
  Dataset data;
  data.class_names = {"normal", "fault"};
  data.samples.push_back(random_sample(config, rng));
  data.labels.push_back(0);
  data.norm_stats.min.assign(8, 0.0);
  data.norm_stats.max.assign(8, 1.0);
  data.norm_stats.degenerate.assign(8, false);

  HdlcnnModel model = build_model(config, identity_ordering(8));
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 1;
  tc.learning_rate = 5e-3;
  const TrainHistory history = train_model(model, data, tc);
  REQUIRE(history.loss.size() == 200);
  for (double l : history.loss) CHECK(std::isfinite(l));
  CHECK(history.loss.back() < 1e-2);
  CHECK(history.accuracy.back() == 1.0);
}

TEST_CASE("training is deterministic given seeds") {
  ModelConfig config = small_config();
  config.seed = 21;
  Rng rng(22);
  const Dataset data = tiny_dataset(config, 4, rng);
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 3;
  tc.shuffle_seed = 77;

  HdlcnnModel a = build_model(config, identity_ordering(8));
  HdlcnnModel b = build_model(config, identity_ordering(8));
  const TrainHistory ha = train_model(a, data, tc);
  const TrainHistory hb = train_model(b, data, tc);
  CHECK(ha.loss == hb.loss);
  CHECK(ha.accuracy == hb.accuracy);
  const auto pa = std::as_const(a).named_parameters();
  const auto pb = std::as_const(b).named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].second->values() == pb[i].second->values());
  }
}

TEST_CASE("training rejects unusable datasets") {
  ModelConfig config = small_config();
  HdlcnnModel model = build_model(config, identity_ordering(8));
  TrainConfig tc;
  Dataset empty;
  empty.class_names = {"a", "b"};
  CHECK_THROWS_AS(train_model(model, empty, tc), std::invalid_argument);

  Rng rng(1);
  Dataset overflow = tiny_dataset(config, 2, rng);
  overflow.labels[0] = 9;
  CHECK_THROWS_AS(train_model(model, overflow, tc), std::invalid_argument);
}

TEST_CASE("evaluation: memorized set scores 1.0, zeroed model predicts one class") {
  ModelConfig config = small_config();
  config.seed = 41;
  Rng rng(42);
  const Dataset data = tiny_dataset(config, 3, rng);

  HdlcnnModel model = build_model(config, identity_ordering(8));
  TrainConfig tc;
  tc.epochs = 150;
  tc.batch_size = 2;
  train_model(model, data, tc);
  const Metrics trained = evaluate(model, data);
  CHECK(trained.accuracy == 1.0);
  CHECK(trained.n_samples == 6);
  for (int c = 0; c < 2; ++c) {
    CHECK(trained.per_class_accuracy[c] == 1.0);
    for (int k = 0; k < 2; ++k) {
      CHECK(trained.confusion[c][k] == (c == k ? 3 : 0));
    }
  }

  // All-zero parameters tie every logit; argmax resolves to class 0.
  HdlcnnModel zeroed = build_model(config, identity_ordering(8));
  for (auto& [name, tensor] : zeroed.named_parameters()) tensor->fill(0.0);
  zeroed.mark_parameters_updated();
  const Metrics constant = evaluate(zeroed, data);
  CHECK(constant.accuracy == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(constant.confusion[0][0] == 3);
  CHECK(constant.confusion[1][0] == 3);
  CHECK(constant.per_class_accuracy[0] == 1.0);
  CHECK(constant.per_class_accuracy[1] == 0.0);
}

TEST_CASE("model persistence round trip is bit-exact") {
  ModelConfig config = small_config();
  config.seed = 51;
  Rng rng(52);
  const Dataset data = tiny_dataset(config, 3, rng);
  HdlcnnModel model = build_model(config, identity_ordering(8));
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 2;
  train_model(model, data, tc);

  const auto path = temp_dir() / "model.bin";
  save_model(model, path.string());
  const HdlcnnModel loaded = load_model(path.string());

  CHECK(loaded.config().n_features == config.n_features);
  CHECK(loaded.config().kernel_h == config.kernel_h);
  CHECK(loaded.config().dilation == config.dilation);
  CHECK(loaded.ordering().permutation == model.ordering().permutation);
  CHECK(loaded.ordering().boundary == model.ordering().boundary);

  const auto pa = std::as_const(model).named_parameters();
  const auto pb = loaded.named_parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second->values() == pb[i].second->values());
  }

  for (int trial = 0; trial < 5; ++trial) {
    const Tensor sample = random_sample(config, rng);
    CHECK(model.logits(sample).values() == loaded.logits(sample).values());
  }

  const Metrics ma = evaluate(model, data);
  const Metrics mb = evaluate(loaded, data);
  CHECK(ma.accuracy == mb.accuracy);
  CHECK(ma.confusion == mb.confusion);

  // Saving the identical model twice gives identical bytes.
  const auto path2 = temp_dir() / "model_again.bin";
  save_model(model, path2.string());
  CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("corrupted model files fail with distinct error codes") {
  ModelConfig config = small_config();
  config.seed = 61;
  HdlcnnModel model = build_model(config, identity_ordering(8));
  const auto path = temp_dir() / "donor.bin";
  save_model(model, path.string());
  const std::string good = read_bytes(path);

  const auto check_code = [&](const std::string& bytes, IoErrorCode expected) {
    const auto bad_path = temp_dir() / "mutant.bin";
    write_bytes(bad_path, bytes);
    try {
      load_model(bad_path.string());
      FAIL("expected an IoError");
    } catch (const IoError& e) {
      CHECK(e.code() == expected);
    }
  };

  std::string wrong_magic = good;
  wrong_magic[0] = 'X';
  check_code(wrong_magic, IoErrorCode::bad_magic);

  std::string wrong_version = good;
  wrong_version[4] = 9;
  check_code(wrong_version, IoErrorCode::bad_version);

  check_code(good.substr(0, good.size() - 3), IoErrorCode::truncated);
  check_code(good.substr(0, 10), IoErrorCode::truncated);

  std::string flipped = good;
  flipped[good.size() - 10] ^= 0x40;
  check_code(flipped, IoErrorCode::bad_checksum);

  // Structurally sound frame whose manifest is not JSON.
  const std::string manifest = "this is not json";
  std::string frame = "HDL1";
  const auto push_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) frame.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  push_u32(1);
  const std::uint64_t len = manifest.size();
  for (int i = 0; i < 8; ++i) frame.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  frame += manifest;
  const std::uint32_t crc =
      crc32(reinterpret_cast<const unsigned char*>(frame.data()), frame.size());
  push_u32(crc);
  check_code(frame, IoErrorCode::bad_manifest);

  try {
    load_model((temp_dir() / "does_not_exist.bin").string());
    FAIL("expected an IoError");
  } catch (const IoError& e) {
    CHECK(e.code() == IoErrorCode::open_failed);
  }
}

TEST_CASE("identity ordering splits the features at the midpoint") {
  const FeatureOrdering a = identity_ordering(22);
  CHECK(a.boundary == 11);
  CHECK(a.permutation.size() == 22);
  CHECK(a.permutation[0] == 0);
  CHECK(a.permutation[21] == 21);

  const FeatureOrdering b = identity_ordering(9);
  CHECK(b.boundary == 4);
}
