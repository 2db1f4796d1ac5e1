#include "mdme/presets.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mdme/errors.hpp"

#ifndef MDME_DEFAULT_PRESET_DIR
#define MDME_DEFAULT_PRESET_DIR "presets"
#endif

namespace mdme {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) {
      std::string list;
      for (const auto& k : ok) list += (list.empty() ? "" : ", ") + k;
      throw ConfigError(where + ": unknown key '" + key + "' (allowed: " + list + ")");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

json noise_json(const NoiseSpec& spec) {
  json arr = json::array();
  for (const auto& r : spec.rules) arr.push_back({{"selector", r.selector}, {"low", r.low}, {"high", r.high}});
  return arr;
}

json reward_json(const std::vector<RewardTerm>& terms) {
  json tracking = json::array(), other = json::array();
  for (const auto& t : terms) {
    json e{{"name", t.name}, {"weight", t.weight}};
    if (t.scale) e["scale"] = *t.scale;
    (t.group == "tracking" ? tracking : other).push_back(e);
  }
  return {{"tracking", tracking}, {"other", other}};
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("train config: batch_size must be at least 1");
  if (!(beta >= 0.0)) throw ConfigError("train config: beta must be nonnegative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train config: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train config: adam eps must be positive");
  if (validate_every == 0) throw ConfigError("train config: validate_every must be at least 1");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  layout_by_name(layout);
  for (const auto& r : noise.rules)
    if (r.low > r.high) throw ConfigError("noise rule '" + r.selector + "': low exceeds high");
  for (const auto& t : rewards)
    if (t.scale && !(*t.scale > 0.0)) throw ConfigError("reward '" + t.name + "': scale must be positive");
  if (!retarget.identity && retarget.lag == 0) throw ConfigError("retarget: lag must be at least 1");
}

json to_json(const MdmeConfig& c) {
  std::vector<std::size_t> enc = c.encoder_hidden;
  enc.push_back(c.latent);
  return {{"history", c.history},         {"goal_dim", c.goal_dim},        {"conv_channels", c.conv_channels},
          {"kernel", c.kernel},           {"levels", c.levels},            {"encoder_dims", enc},
          {"decoder_dims", c.decoder_hidden}, {"action_dim", c.action_dim}, {"proprio_dim", c.proprio_dim},
          {"output_dim", c.output_dim},   {"elu_alpha", c.elu_alpha},      {"log_sigma_min", c.log_sigma_min},
          {"log_sigma_max", c.log_sigma_max}};
}

MdmeConfig model_config_from_json(const json& j) {
  const std::string w = "model";
  check_keys(j, w,
             {"history", "goal_dim", "conv_channels", "kernel", "levels", "encoder_dims", "decoder_dims", "action_dim",
              "proprio_dim", "output_dim", "elu_alpha", "log_sigma_min", "log_sigma_max"});
  MdmeConfig c;
  read(j, "history", c.history, w);
  read(j, "goal_dim", c.goal_dim, w);
  read(j, "conv_channels", c.conv_channels, w);
  read(j, "kernel", c.kernel, w);
  read(j, "levels", c.levels, w);
  if (j.contains("encoder_dims")) {
    std::vector<std::size_t> enc;
    read(j, "encoder_dims", enc, w);
    if (enc.empty()) throw ConfigError("model.encoder_dims: must end with the latent size");
    c.latent = enc.back();
    enc.pop_back();
    c.encoder_hidden = enc;
  }
  read(j, "decoder_dims", c.decoder_hidden, w);
  read(j, "action_dim", c.action_dim, w);
  read(j, "proprio_dim", c.proprio_dim, w);
  read(j, "output_dim", c.output_dim, w);
  read(j, "elu_alpha", c.elu_alpha, w);
  read(j, "log_sigma_min", c.log_sigma_min, w);
  read(j, "log_sigma_max", c.log_sigma_max, w);
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  json dr = json::array();
  for (const auto& r : c.domain_randomization) dr.push_back({{"property", r.property}, {"low", r.low}, {"high", r.high}});
  return {{"name", c.name},
          {"platform", c.platform},
          {"layout", c.layout},
          {"model", to_json(c.model)},
          {"train",
           {{"seed", c.train.seed},
            {"learning_rate", c.train.learning_rate},
            {"batch_size", c.train.batch_size},
            {"max_iterations", c.train.max_iterations},
            {"beta", c.train.beta},
            {"adam", {{"beta1", c.train.adam_beta1}, {"beta2", c.train.adam_beta2}, {"eps", c.train.adam_eps}}},
            {"validate_every", c.train.validate_every},
            {"validation_motions", c.train.validation_motions},
            {"ablation", ablation_name(c.train.ablation)}}},
          {"retarget",
           {{"identity", c.retarget.identity},
            {"seed", c.retarget.seed},
            {"gain", c.retarget.gain},
            {"lag", c.retarget.lag},
            {"warp_amp", c.retarget.warp_amp},
            {"warp_scale", c.retarget.warp_scale},
            {"offset", c.retarget.offset},
            {"twist", c.retarget.twist}}},
          {"noise", noise_json(c.noise)},
          {"rewards", reward_json(c.rewards)},
          {"domain_randomization", dr}};
}

RunConfig run_config_from_json(const json& j) {
  check_keys(j, "config",
             {"name", "platform", "layout", "model", "train", "retarget", "noise", "rewards", "domain_randomization"});
  RunConfig c;
  read(j, "name", c.name, "config");
  read(j, "platform", c.platform, "config");
  read(j, "layout", c.layout, "config");
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) {
    const auto& t = j.at("train");
    const std::string w = "train";
    check_keys(t, w,
               {"seed", "learning_rate", "batch_size", "max_iterations", "beta", "adam", "validate_every",
                "validation_motions", "ablation"});
    read(t, "seed", c.train.seed, w);
    read(t, "learning_rate", c.train.learning_rate, w);
    read(t, "batch_size", c.train.batch_size, w);
    read(t, "max_iterations", c.train.max_iterations, w);
    read(t, "beta", c.train.beta, w);
    read(t, "validate_every", c.train.validate_every, w);
    read(t, "validation_motions", c.train.validation_motions, w);
    if (t.contains("adam")) {
      const auto& a = t.at("adam");
      check_keys(a, "train.adam", {"beta1", "beta2", "eps"});
      read(a, "beta1", c.train.adam_beta1, "train.adam");
      read(a, "beta2", c.train.adam_beta2, "train.adam");
      read(a, "eps", c.train.adam_eps, "train.adam");
    }
    if (t.contains("ablation")) {
      std::string key;
      read(t, "ablation", key, w);
      c.train.ablation = parse_ablation(key);
    }
  }
  if (j.contains("retarget")) {
    const auto& r = j.at("retarget");
    const std::string w = "retarget";
    check_keys(r, w, {"identity", "seed", "gain", "lag", "warp_amp", "warp_scale", "offset", "twist"});
    read(r, "identity", c.retarget.identity, w);
    read(r, "seed", c.retarget.seed, w);
    read(r, "gain", c.retarget.gain, w);
    read(r, "lag", c.retarget.lag, w);
    read(r, "warp_amp", c.retarget.warp_amp, w);
    read(r, "warp_scale", c.retarget.warp_scale, w);
    read(r, "offset", c.retarget.offset, w);
    read(r, "twist", c.retarget.twist, w);
  }
  if (j.contains("noise")) {
    if (!j.at("noise").is_array()) throw ConfigError("noise: expected an array");
    for (const auto& n : j.at("noise")) {
      check_keys(n, "noise[]", {"selector", "low", "high", "source"});
      NoiseRule rule;
      read(n, "selector", rule.selector, "noise[]");
      read(n, "low", rule.low, "noise[]");
      read(n, "high", rule.high, "noise[]");
      c.noise.rules.push_back(rule);
    }
  }
  if (j.contains("rewards")) {
    const auto& r = j.at("rewards");
    check_keys(r, "rewards", {"tracking", "other"});
    for (const char* group : {"tracking", "other"}) {
      if (!r.contains(group)) continue;
      for (const auto& e : r.at(group)) {
        check_keys(e, std::string("rewards.") + group, {"name", "weight", "scale"});
        RewardTerm t;
        t.group = group;
        read(e, "name", t.name, "rewards");
        read(e, "weight", t.weight, "rewards");
        if (e.contains("scale")) {
          double s = 0.0;
          read(e, "scale", s, "rewards");
          t.scale = s;
        }
        c.rewards.push_back(t);
      }
    }
  }
  if (j.contains("domain_randomization")) {
    for (const auto& e : j.at("domain_randomization")) {
      check_keys(e, "domain_randomization[]", {"property", "low", "high"});
      RandomizationRange r;
      read(e, "property", r.property, "domain_randomization");
      read(e, "low", r.low, "domain_randomization");
      read(e, "high", r.high, "domain_randomization");
      c.domain_randomization.push_back(r);
    }
  }
  c.validate();
  return c;
}

std::string preset_dir() {
  if (const char* env = std::getenv("MDME_PRESET_DIR"); env && *env) return env;
  return MDME_DEFAULT_PRESET_DIR;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  namespace fs = std::filesystem;
  if (!fs::is_directory(preset_dir())) return names;
  for (const auto& e : fs::directory_iterator(preset_dir()))
    if (e.path().extension() == ".json") names.push_back(e.path().stem().string());
  std::sort(names.begin(), names.end());
  return names;
}

RunConfig load_run_config(const std::string& path_or_name) {
  namespace fs = std::filesystem;
  std::string path = path_or_name;
  if (!fs::exists(path)) {
    const fs::path candidate = fs::path(preset_dir()) / (path_or_name + ".json");
    if (fs::exists(candidate)) {
      path = candidate.string();
    } else {
      std::string names;
      for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
      throw IoError("config '" + path_or_name + "' is neither a file nor a preset (presets: " + names + ")");
    }
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("subcommand") && j.contains("config")) j = j.at("config");
  try {
    return run_config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace mdme
