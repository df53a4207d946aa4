#pragma once

#include "kpdisc/model.hpp"

#include <json.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace kpdisc {

/// Named tensors plus a JSON metadata header in one binary file.
///
/// Layout (little-endian):
///   8 bytes   magic "KPDARCH\0"
///   u32       format version
///   u64       header length N
///   N bytes   UTF-8 JSON: {"meta": {...}, "tensors": [{"name","dtype","shape","offset","nbytes"}, ...]}
///   payload   raw contiguous tensor bytes at the listed offsets
///
/// Tensors are copied byte for byte, so a save/load round trip is bit-exact.
struct TensorArchive {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, torch::Tensor> tensors;

  void save(const std::filesystem::path& path) const;  // atomic
  static TensorArchive load(const std::filesystem::path& path);
};

/// Model + optional optimizer moments, as written by the trainer.
struct Checkpoint {
  ModelState state;
  /// Optimizer tensors keyed `adam/<param-name>/<exp_avg|exp_avg_sq>` and step counts in meta.
  TensorArchive optimizer;
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Copies all parameters and buffers of `module` into `archive` under `prefix`.
void export_module(const torch::nn::Module& module, const std::string& prefix, TensorArchive& archive);
/// Loads parameters and buffers from `archive`; every module tensor must be present unless `partial`.
void import_module(torch::nn::Module& module, const std::string& prefix, const TensorArchive& archive,
                   bool partial = false);

void save_checkpoint(const std::filesystem::path& path, const ModelState& state,
                     const TensorArchive* optimizer = nullptr, const nlohmann::json& extra = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace kpdisc
