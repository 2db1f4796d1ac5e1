#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdme/embedding.hpp"
#include "mdme/motion.hpp"
#include "mdme/objectives.hpp"

namespace mdme {

struct TrainConfig {
  std::uint64_t seed = 1;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_iterations = 5000;
  double beta = kDefaultBeta;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t validate_every = 100;
  std::size_t validation_motions = 2;
  Ablation ablation = Ablation::full;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// One row of a domain-randomisation table, kept for reference.
struct RandomizationRange {
  std::string property;
  double low = 0.0;
  double high = 0.0;

  bool operator==(const RandomizationRange&) const = default;
};

/// Everything a run needs: model, optimiser, data synthesis, noise and the
/// platform's reward table.
struct RunConfig {
  std::string name;
  std::string platform;
  std::string layout = "quadruped";
  MdmeConfig model;
  TrainConfig train;
  RetargetConfig retarget;
  NoiseSpec noise;
  std::vector<RewardTerm> rewards;
  std::vector<RandomizationRange> domain_randomization;

  void validate() const;
};

nlohmann::json to_json(const MdmeConfig& cfg);
MdmeConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
/// Strict: unknown keys and wrong types raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

/// MDME_PRESET_DIR if set, otherwise the bundled presets directory.
std::string preset_dir();
std::vector<std::string> preset_names();

/// Accepts a config file, a run manifest (its "config" is used) or the name
/// of a bundled preset.
RunConfig load_run_config(const std::string& path_or_name);

}  // namespace mdme
