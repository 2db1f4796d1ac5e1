#include "mdme/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>

#include "mdme/errors.hpp"
#include "mdme/presets.hpp"

namespace mdme {

using nlohmann::json;

namespace {

std::string strip_suffix(const std::string& stem) {
  for (const char* ext : {".json", ".bin"}) {
    const std::string e(ext);
    if (stem.size() > e.size() && stem.compare(stem.size() - e.size(), e.size(), e) == 0)
      return stem.substr(0, stem.size() - e.size());
  }
  return stem;
}

void put_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64(const std::string& in, std::size_t index) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[index * 8 + i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::string& stem_in, const MdmeModel& model, const json& run_config) {
  const std::string stem = strip_suffix(stem_in);
  const auto parent = std::filesystem::path(stem).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);

  std::vector<std::pair<std::string, std::pair<Shape, std::vector<double>>>> entries;
  for (const auto& [name, t] : model.named_parameters())
    entries.push_back({name, {t.shape(), {t.data().begin(), t.data().end()}}});
  const auto& conv = model.params().conv;
  for (std::size_t l = 0; l < conv.size(); ++l) {
    const std::string p = "conv" + std::to_string(l);
    const auto& st = conv[l].stats;
    entries.push_back({p + ".running_mean", {{st.running_mean.size()}, st.running_mean}});
    entries.push_back({p + ".running_var", {{st.running_var.size()}, st.running_var}});
  }

  json manifest;
  manifest["format"] = "mdme-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = "float64";
  manifest["byte_order"] = "little";
  manifest["payload"] = std::filesystem::path(stem + ".bin").filename().string();
  manifest["model"] = to_json(model.config());
  manifest["ablation"] = ablation_name(model.ablation());
  manifest["run_config"] = run_config;
  manifest["tensors"] = json::array();
  std::string payload;
  std::size_t offset = 0;
  for (const auto& [name, sv] : entries) {
    const auto& [shape, values] = sv;
    manifest["tensors"].push_back({{"name", name}, {"shape", shape}, {"offset", offset}, {"count", values.size()}});
    for (double v : values) put_f64(payload, v);
    offset += values.size();
  }
  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw IoError("cannot write checkpoint payload '" + stem + ".bin'");
  bin.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  std::ofstream js(stem + ".json");
  if (!js) throw IoError("cannot write checkpoint manifest '" + stem + ".json'");
  js << manifest.dump(2) << "\n";
  if (!bin || !js) throw IoError("failed writing checkpoint '" + stem + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& stem_in) {
  const std::string stem = strip_suffix(stem_in);
  std::ifstream js(stem + ".json");
  if (!js) throw IoError("cannot open checkpoint manifest '" + stem + ".json'");
  json manifest;
  try {
    manifest = json::parse(js);
  } catch (const json::exception& e) {
    throw ParseError("checkpoint '" + stem + ".json': " + e.what());
  }
  if (manifest.value("format", "") != "mdme-checkpoint") {
    throw ParseError("checkpoint '" + stem + ".json': not an mdme checkpoint manifest");
  }
  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw IoError("cannot open checkpoint payload '" + stem + ".bin'");
  std::string payload((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (payload.size() % 8 != 0) throw ParseError("checkpoint payload size is not a multiple of 8 bytes");
  const std::size_t total = payload.size() / 8;

  MdmeModel model(model_config_from_json(manifest.at("model")), parse_ablation(manifest.at("ablation").get<std::string>()),
                  0);
  std::map<std::string, std::span<double>> slots;
  for (auto& [name, t] : model.named_parameters()) slots[name] = t.mutable_data();
  for (auto& [name, buf] : model.named_buffers()) slots[name] = std::span<double>(*buf);

  std::size_t filled = 0;
  try {
    for (const auto& e : manifest.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      auto it = slots.find(name);
      if (it == slots.end()) throw ConfigError("checkpoint tensor '" + name + "' does not belong to this model");
      if (it->second.size() != count) {
        throw ConfigError("checkpoint tensor '" + name + "' has " + std::to_string(count) + " values, model expects " +
                          std::to_string(it->second.size()));
      }
      if (offset + count > total) throw ParseError("checkpoint tensor '" + name + "' runs past the payload");
      for (std::size_t i = 0; i < count; ++i) it->second[i] = get_f64(payload, offset + i);
      ++filled;
    }
  } catch (const json::exception& e) {
    throw ParseError("checkpoint '" + stem + ".json': " + e.what());
  }
  if (filled != slots.size()) throw ConfigError("checkpoint '" + stem + "' is missing tensors for this model");
  return {std::move(model), manifest.value("run_config", json::object())};
}

}  // namespace mdme
