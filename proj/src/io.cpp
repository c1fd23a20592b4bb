#include "io.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "json.hpp"

namespace hdlcnn {

namespace {

using nlohmann::json;

constexpr char kModelMagic[4] = {'H', 'D', 'L', '1'};
constexpr char kDatasetMagic[4] = {'H', 'D', 'S', '1'};
constexpr std::uint32_t kFormatVersion = 1;

void append_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void append_u64_le(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  }
}

void append_f64_le(std::vector<unsigned char>& out, double v) {
  append_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

double read_f64_le(const unsigned char* p) {
  return std::bit_cast<double>(read_u64_le(p));
}

void write_file_atomic(const std::string& path,
                       const std::vector<unsigned char>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError(IoErrorCode::open_failed, path + ": cannot open for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw IoError(IoErrorCode::open_failed, path + ": write failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError(IoErrorCode::open_failed,
                  path + ": cannot replace file: " + ec.message());
  }
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError(IoErrorCode::open_failed, path + ": cannot open file");
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

std::vector<unsigned char> frame_file(const char magic[4], const json& manifest,
                                      const std::vector<double>& payload) {
  std::vector<unsigned char> bytes;
  const std::string manifest_text = manifest.dump();
  bytes.reserve(16 + manifest_text.size() + payload.size() * 8 + 4);
  bytes.insert(bytes.end(), magic, magic + 4);
  append_u32_le(bytes, kFormatVersion);
  append_u64_le(bytes, manifest_text.size());
  bytes.insert(bytes.end(), manifest_text.begin(), manifest_text.end());
  for (double v : payload) append_f64_le(bytes, v);
  append_u32_le(bytes, crc32(bytes.data(), bytes.size()));
  return bytes;
}

struct ParsedFile {
  json manifest;
  const unsigned char* payload = nullptr;
  std::size_t payload_doubles = 0;
};

// Structural checks in order: magic, version, sizes, checksum, manifest.
ParsedFile parse_frame(const std::vector<unsigned char>& bytes,
                       const char magic[4], const std::string& path) {
  if (bytes.size() < 4) {
    throw IoError(IoErrorCode::truncated, path + ": file shorter than its magic");
  }
  if (std::memcmp(bytes.data(), magic, 4) != 0) {
    throw IoError(IoErrorCode::bad_magic,
                  path + ": bad magic, not a " +
                      std::string(magic, magic + 4) + " file");
  }
  if (bytes.size() < 16) {
    throw IoError(IoErrorCode::truncated, path + ": truncated header");
  }
  const std::uint32_t version = read_u32_le(bytes.data() + 4);
  if (version != kFormatVersion) {
    throw IoError(IoErrorCode::bad_version,
                  path + ": format version " + std::to_string(version) +
                      ", expected " + std::to_string(kFormatVersion));
  }
  const std::uint64_t manifest_len = read_u64_le(bytes.data() + 8);
  if (bytes.size() < 16 + manifest_len + 4) {
    throw IoError(IoErrorCode::truncated,
                  path + ": truncated before the end of the manifest");
  }
  const std::size_t body = bytes.size() - 4;
  const std::size_t payload_bytes = body - 16 - static_cast<std::size_t>(manifest_len);
  if (payload_bytes % 8 != 0) {
    throw IoError(IoErrorCode::truncated, path + ": truncated mid-payload");
  }
  const std::uint32_t stored = read_u32_le(bytes.data() + body);
  const std::uint32_t computed = crc32(bytes.data(), body);
  if (stored != computed) {
    throw IoError(IoErrorCode::bad_checksum, path + ": checksum mismatch");
  }

  ParsedFile parsed;
  try {
    parsed.manifest = json::parse(bytes.begin() + 16,
                                  bytes.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_len));
  } catch (const json::exception& e) {
    throw IoError(IoErrorCode::bad_manifest,
                  path + ": manifest is not valid JSON: " + e.what());
  }
  parsed.payload = bytes.data() + 16 + manifest_len;
  parsed.payload_doubles = payload_bytes / 8;
  return parsed;
}

std::string activation_name(Activation a) {
  return a == Activation::relu ? "relu" : "none";
}

Activation activation_from_name(const std::string& name, const std::string& path) {
  if (name == "relu") return Activation::relu;
  if (name == "none") return Activation::none;
  throw IoError(IoErrorCode::bad_manifest,
                path + ": unknown activation '" + name + "'");
}

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t size) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int bit = 0; bit < 8; ++bit) {
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
      }
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < size; ++i) {
    crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  }
  return crc ^ 0xFFFFFFFFu;
}

void save_model(const HdlcnnModel& model, const std::string& path) {
  const ModelConfig& cfg = model.config();
  json manifest;
  manifest["config"] = {
      {"n_features", cfg.n_features},
      {"n_timesteps", cfg.n_timesteps},
      {"n_classes", cfg.n_classes},
      {"conv1_channels", cfg.conv1_channels},
      {"conv2_channels", cfg.conv2_channels},
      {"kernel_h", cfg.kernel_h},
      {"kernel_w", cfg.kernel_w},
      {"dilation", cfg.dilation},
      {"pool_h", cfg.pool_h},
      {"pool_w", cfg.pool_w},
      {"activation", activation_name(cfg.activation)},
      {"seed", cfg.seed},
  };
  manifest["ordering"] = {{"permutation", model.ordering().permutation},
                          {"boundary", model.ordering().boundary}};

  std::vector<double> payload;
  json params = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : model.named_parameters()) {
    params.push_back({{"name", name},
                      {"shape", tensor->shape()},
                      {"offset", offset}});
    payload.insert(payload.end(), tensor->data(), tensor->data() + tensor->size());
    offset += tensor->size() * 8;
  }
  manifest["parameters"] = params;

  write_file_atomic(path, frame_file(kModelMagic, manifest, payload));
}

HdlcnnModel load_model(const std::string& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  const ParsedFile parsed = parse_frame(bytes, kModelMagic, path);

  try {
    const json& jc = parsed.manifest.at("config");
    ModelConfig cfg;
    cfg.n_features = jc.at("n_features").get<int>();
    cfg.n_timesteps = jc.at("n_timesteps").get<int>();
    cfg.n_classes = jc.at("n_classes").get<int>();
    cfg.conv1_channels = jc.at("conv1_channels").get<int>();
    cfg.conv2_channels = jc.at("conv2_channels").get<int>();
    cfg.kernel_h = jc.at("kernel_h").get<int>();
    cfg.kernel_w = jc.at("kernel_w").get<int>();
    cfg.dilation = jc.at("dilation").get<int>();
    cfg.pool_h = jc.at("pool_h").get<int>();
    cfg.pool_w = jc.at("pool_w").get<int>();
    cfg.activation = activation_from_name(jc.at("activation").get<std::string>(), path);
    cfg.seed = jc.at("seed").get<std::uint64_t>();

    FeatureOrdering ordering;
    ordering.permutation =
        parsed.manifest.at("ordering").at("permutation").get<std::vector<int>>();
    ordering.boundary = parsed.manifest.at("ordering").at("boundary").get<int>();

    HdlcnnModel model(cfg, ordering);

    auto named = model.named_parameters();
    const json& jparams = parsed.manifest.at("parameters");
    if (jparams.size() != named.size()) {
      throw IoError(IoErrorCode::bad_manifest,
                    path + ": manifest lists " + std::to_string(jparams.size()) +
                        " parameters, model has " + std::to_string(named.size()));
    }
    std::size_t loaded = 0;
    for (const json& entry : jparams) {
      const std::string name = entry.at("name").get<std::string>();
      const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
      const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
      Tensor* target = nullptr;
      for (auto& [pname, tensor] : named) {
        if (pname == name) {
          target = tensor;
          break;
        }
      }
      if (target == nullptr) {
        throw IoError(IoErrorCode::bad_manifest,
                      path + ": unknown parameter '" + name + "'");
      }
      if (target->shape() != shape) {
        throw IoError(IoErrorCode::bad_manifest,
                      path + ": parameter '" + name + "' shaped " +
                          shape_string(shape) + ", model expects " +
                          target->shape_string());
      }
      if (offset % 8 != 0 ||
          offset / 8 + target->size() > parsed.payload_doubles) {
        throw IoError(IoErrorCode::bad_manifest,
                      path + ": parameter '" + name + "' offset " +
                          std::to_string(offset) + " outside the payload");
      }
      for (std::size_t i = 0; i < target->size(); ++i) {
        (*target)[i] = read_f64_le(parsed.payload + offset + i * 8);
      }
      loaded += target->size();
    }
    if (loaded != parsed.payload_doubles) {
      throw IoError(IoErrorCode::bad_manifest,
                    path + ": payload holds " +
                        std::to_string(parsed.payload_doubles) +
                        " values, parameters cover " + std::to_string(loaded));
    }
    return model;
  } catch (const json::exception& e) {
    throw IoError(IoErrorCode::bad_manifest,
                  path + ": malformed manifest: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(IoErrorCode::bad_manifest,
                  path + ": manifest describes an invalid model: " + e.what());
  }
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  check_dataset(dataset);
  json manifest;
  manifest["class_names"] = dataset.class_names;
  manifest["labels"] = dataset.labels;
  manifest["n_samples"] = dataset.samples.size();
  manifest["n_features"] = dataset.n_features();
  manifest["n_timesteps"] = dataset.n_timesteps();
  manifest["norm"] = {{"min", dataset.norm_stats.min},
                      {"max", dataset.norm_stats.max},
                      {"degenerate", dataset.norm_stats.degenerate}};

  std::vector<double> payload;
  payload.reserve(dataset.samples.size() * dataset.samples.front().size());
  for (const Tensor& sample : dataset.samples) {
    payload.insert(payload.end(), sample.data(), sample.data() + sample.size());
  }
  write_file_atomic(path, frame_file(kDatasetMagic, manifest, payload));
}

Dataset load_dataset(const std::string& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  const ParsedFile parsed = parse_frame(bytes, kDatasetMagic, path);

  try {
    Dataset dataset;
    dataset.class_names =
        parsed.manifest.at("class_names").get<std::vector<std::string>>();
    dataset.labels = parsed.manifest.at("labels").get<std::vector<int>>();
    const std::size_t n = parsed.manifest.at("n_samples").get<std::size_t>();
    const int p = parsed.manifest.at("n_features").get<int>();
    const int t = parsed.manifest.at("n_timesteps").get<int>();
    const json& jnorm = parsed.manifest.at("norm");
    dataset.norm_stats.min = jnorm.at("min").get<std::vector<double>>();
    dataset.norm_stats.max = jnorm.at("max").get<std::vector<double>>();
    dataset.norm_stats.degenerate = jnorm.at("degenerate").get<std::vector<bool>>();

    if (p < 1 || t < 1 || n < 1) {
      throw IoError(IoErrorCode::bad_manifest,
                    path + ": non-positive sample dimensions in manifest");
    }
    const std::size_t per_sample = static_cast<std::size_t>(p) * t;
    if (parsed.payload_doubles != n * per_sample) {
      throw IoError(IoErrorCode::bad_manifest,
                    path + ": payload holds " +
                        std::to_string(parsed.payload_doubles) +
                        " values, manifest expects " +
                        std::to_string(n * per_sample));
    }
    if (dataset.labels.size() != n) {
      throw IoError(IoErrorCode::bad_manifest,
                    path + ": " + std::to_string(dataset.labels.size()) +
                        " labels for " + std::to_string(n) + " samples");
    }
    for (std::size_t s = 0; s < n; ++s) {
      Tensor sample({1, p, t});
      for (std::size_t i = 0; i < per_sample; ++i) {
        sample[i] = read_f64_le(parsed.payload + (s * per_sample + i) * 8);
      }
      dataset.samples.push_back(std::move(sample));
    }
    check_dataset(dataset);
    return dataset;
  } catch (const json::exception& e) {
    throw IoError(IoErrorCode::bad_manifest,
                  path + ": malformed manifest: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(IoErrorCode::bad_manifest,
                  path + ": manifest describes an invalid dataset: " + e.what());
  }
}

}  // namespace hdlcnn
