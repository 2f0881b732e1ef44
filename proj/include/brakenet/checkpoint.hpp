#pragma once

#include <filesystem>

#include <json.hpp>

#include "brakenet/models.hpp"

namespace brakenet {

// Checkpoint file layout (version 1):
//   8 bytes   magic "BRKNCKPT"
//   u32 LE    format version
//   u64 LE    header length in bytes
//   header    UTF-8 JSON: {"version", "spec", "tensors": [{name, shape}], "metadata"}
//   payload   float64 LE values of every listed tensor, in header order
// Tensors cover all learnable parameters plus BN running mean/var, so a
// save/load round trip is bit-exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct Checkpoint {
  Model model;
  nlohmann::json metadata;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace brakenet
