#pragma once

#include "kpdisc/config.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace kpdisc {

inline constexpr const char* kToolkitVersion = "0.1.0";
inline constexpr int kManifestVersion = 1;

/// Record of one command invocation, written as `manifest.json` in the output
/// directory. Passing it back as `--config` replays the run.
struct RunManifest {
  std::string command;
  nlohmann::json config;                      // resolved configuration
  std::map<std::string, std::string> inputs;  // path -> sha256
  std::uint64_t seed = 0;
  std::string started;   // ISO-8601 UTC
  std::string finished;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

std::string utc_timestamp();

/// Hashes every existing input path; directories are hashed file by file.
std::map<std::string, std::string> hash_inputs(const std::vector<std::filesystem::path>& paths);

void write_manifest(const std::filesystem::path& dir, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace kpdisc
