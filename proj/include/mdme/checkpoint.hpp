#pragma once

#include <string>

#include "json.hpp"
#include "mdme/embedding.hpp"

namespace mdme {

/// A checkpoint is two files sharing a stem:
///   <stem>.json  manifest: model config, ablation, run config and a tensor
///                table of {name, shape, offset, count}; offset and count
///                are in values, not bytes
///   <stem>.bin   every tensor's values back to back as little-endian
///                IEEE-754 float64, in table order
/// Batch-norm running statistics are stored as tensors named
/// conv<l>.running_mean / conv<l>.running_var.
void save_checkpoint(const std::string& stem, const MdmeModel& model, const nlohmann::json& run_config);

struct LoadedCheckpoint {
  MdmeModel model;
  nlohmann::json run_config;
};

/// `stem` may carry a .json or .bin suffix.
LoadedCheckpoint load_checkpoint(const std::string& stem);

}  // namespace mdme
