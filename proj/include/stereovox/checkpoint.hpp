#pragma once

#include <filesystem>
#include <memory>

#include <nlohmann/json.hpp>

#include "stereovox/voxelnet.hpp"

namespace svx {

/// Single-file archive: the 8-byte magic "SVXCKPT1", a little-endian u64
/// header length, a JSON header {network, tensors: [{name, dtype, shape,
/// offset, nbytes}], extra}, then raw row-major float32 tensor bytes.
void save_checkpoint(const std::filesystem::path& path, const VoxelNet& net,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  std::unique_ptr<VoxelNet> net;
  nlohmann::json extra;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace svx
