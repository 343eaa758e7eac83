#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace wavebank {

inline constexpr std::string_view kVersion = "0.1.0";

// FNV-1a, used for config digests in run manifests.
uint64_t fnv1a64(std::string_view bytes);
std::string hex64(uint64_t v);

// One manifest.json per output directory, recording what produced it.
struct RunManifest {
  std::string command;
  std::string config_hash;  // hex digest over all config inputs
  uint64_t seed = 0;
  std::vector<std::string> artifacts;
  std::map<std::string, std::string> versions;
};

void write_run_manifest(const std::filesystem::path& dir, const RunManifest& m);
RunManifest read_run_manifest(const std::filesystem::path& dir);

}  // namespace wavebank
