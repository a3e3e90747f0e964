#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "hiccap/model.hpp"
#include "hiccap/optimizer.hpp"

namespace hiccap {

// "HCKP", u32 version, u32 tensor count, then per tensor: u32 name length, name bytes,
// u32 rank, u32 dims[rank], float32 payload (row-major); then u32 length + metadata JSON.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, MatrixF> tensors;
  nlohmann::json metadata = nlohmann::json::object();
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Model parameters and BN buffers under their own names, optimizer moments under
/// "opt.m.<name>" / "opt.v.<name>", and the model config plus its hash in the metadata.
Checkpoint make_checkpoint(const Model& model, const AdamW<float>* optimizer = nullptr,
                           nlohmann::json extra = nlohmann::json::object());

/// Restores every model tensor; optimizer state is restored when `optimizer` is given.
void restore_checkpoint(const Checkpoint& ckpt, Model& model, AdamW<float>* optimizer = nullptr);

/// Builds a model from the config stored in the checkpoint and loads its tensors.
std::unique_ptr<Model> load_model(const Checkpoint& ckpt);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j, const ModelConfig& defaults = {});
/// FNV-1a over the canonical JSON dump of the config, as 16 hex digits.
std::string config_hash(const ModelConfig& cfg);

}  // namespace hiccap
