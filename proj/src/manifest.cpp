#include "kpdisc/manifest.hpp"

#include "kpdisc/error.hpp"
#include "kpdisc/io.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>

namespace kpdisc {

namespace fs = std::filesystem;

nlohmann::json RunManifest::to_json() const {
  return {{"manifest_version", kManifestVersion},
          {"toolkit_version", kToolkitVersion},
          {"command", command},
          {"config", config},
          {"inputs", inputs},
          {"seed", seed},
          {"started", started},
          {"finished", finished}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  if (j.value("manifest_version", 0) != kManifestVersion) throw FormatError("unsupported manifest version");
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.at("config");
  m.inputs = j.value("inputs", std::map<std::string, std::string>{});
  m.seed = j.value("seed", std::uint64_t{0});
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  return m;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::map<std::string, std::string> hash_inputs(const std::vector<fs::path>& paths) {
  std::map<std::string, std::string> out;
  for (const auto& p : paths) {
    if (p.empty() || !fs::exists(p)) continue;
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) out[f.string()] = io::sha256_file(f);
    } else {
      out[p.string()] = io::sha256_file(p);
    }
  }
  return out;
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  io::atomic_write_text(dir / "manifest.json", m.to_json().dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& path) { return RunManifest::from_json(nlohmann::json::parse(io::read_text(path))); }

}  // namespace kpdisc
