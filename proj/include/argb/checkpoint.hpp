#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "argb/model.hpp"
#include "argb/tensor.hpp"

namespace argb {

/// Checkpoint container: a JSON manifest (version, shapes, metadata,
/// tensor directory) followed by named little-endian float32 blobs at the
/// offsets recorded in the manifest. Round trips are bit-exact.
void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors);

struct LoadedCheckpoint {
  nlohmann::json meta;
  std::map<std::string, Tensor> tensors;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Copies tensors by name into the given destinations; throws on a missing
/// name or shape mismatch.
void restore_into(const LoadedCheckpoint& ck,
                  const std::vector<std::pair<std::string, Tensor*>>& dests);

void save_argb_model(const std::string& path, ArgbModel& model,
                     const nlohmann::json& extra_meta = {});

/// Reconstructs the model (expert count and seed are read from the
/// manifest) and restores every tensor. Returns the manifest as well.
std::pair<ArgbModel, nlohmann::json> load_argb_model(const std::string& path);

}  // namespace argb
