#include "wavebank/manifest.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wavebank/error.hpp"

namespace wavebank {

using nlohmann::json;

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void write_run_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["artifacts"] = m.artifacts;
  j["versions"] = m.versions;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot create manifest: " + (dir / "manifest.json").string());
  out << j.dump(2) << '\n';
}

RunManifest read_run_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot open manifest: " + (dir / "manifest.json").string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
  RunManifest m;
  m.command = j.value("command", "");
  m.config_hash = j.value("config_hash", "");
  m.seed = j.value("seed", uint64_t{0});
  if (j.contains("artifacts")) m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
  if (j.contains("versions")) m.versions = j.at("versions").get<std::map<std::string, std::string>>();
  return m;
}

}  // namespace wavebank
