#include "otmap/manifest.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "otmap/tensor.hpp"

namespace otmap {

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::uint64_t h = 1469598103934665603ull;
  char chunk[4096];
  while (f.read(chunk, sizeof(chunk)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(chunk[i]);
      h *= 1099511628211ull;
    }
    if (!f) break;
  }
  return h;
}

void write_manifest(const RunManifest& m, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  nlohmann::json j;
  j["tool"] = "otmap";
  j["version"] = kToolVersion;
  j["command"] = m.command;
  j["status"] = m.status;
  const auto now = std::chrono::system_clock::now();
  j["written_at_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  j["blas"] = blas_backend();
  j["blas_threads"] = blas_threads();
  j["config"] = m.config;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  std::ofstream f(out_dir + "/manifest.json", std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write manifest to " + out_dir);
  f << j.dump(2) << "\n";
}

}  // namespace otmap
