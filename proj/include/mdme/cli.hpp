#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace mdme {

inline constexpr const char* kArtifactVersion = "1.0.0";

/// Provenance record written next to every CLI output.
struct RunManifest {
  std::string subcommand;
  nlohmann::json config;
  std::uint64_t seed = 0;
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::object();
  nlohmann::json options = nlohmann::json::object();
  std::string version = kArtifactVersion;
  std::string timestamp;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

/// Exit codes: 0 success, 2 usage / config / input error, 3 runtime or
/// numeric failure.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace mdme
