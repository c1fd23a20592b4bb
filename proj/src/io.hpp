#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "data.hpp"
#include "model.hpp"

namespace hdlcnn {

// Both file kinds share one framing:
//   magic (4 bytes) | u32 LE format version | u64 LE manifest length |
//   JSON manifest | little-endian f64 payload | u32 LE CRC-32 of all
//   preceding bytes.
// Model files use magic "HDL1" (manifest: config, ordering, named parameter
// table with byte offsets); dataset caches use "HDS1" (manifest: class
// names, labels, normalization stats, sample layout).

enum class IoErrorCode {
  open_failed,
  bad_magic,
  bad_version,
  truncated,
  bad_checksum,
  bad_manifest,
};

class IoError : public std::runtime_error {
 public:
  IoError(IoErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  IoErrorCode code() const { return code_; }

 private:
  IoErrorCode code_;
};

// IEEE 802.3 CRC-32 (reflected, poly 0xEDB88320).
std::uint32_t crc32(const unsigned char* data, std::size_t size);

void save_model(const HdlcnnModel& model, const std::string& path);
HdlcnnModel load_model(const std::string& path);

void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace hdlcnn
