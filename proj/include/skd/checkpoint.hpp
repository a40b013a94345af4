// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "skd/nn/tensor.hpp"

namespace skd {

/// Named-array container. On disk:
///   8 bytes  magic "SKDCKPT\0"
///   u32      format version
///   u64      header length L
///   L bytes  JSON header: {"meta": {...}, "arrays": [{"name","shape","offset"}...]}
///   payload  float32 little-endian arrays, back to back
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> arrays;

  const Tensor* find(const std::string& name) const;
};

/// Writes to a temporary file and renames it into place, so an existing
/// checkpoint at `path` survives a failed write.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws IncompatibleCheckpoint on bad magic, version mismatch or truncation.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace skd
