#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace otmap {

inline constexpr const char* kToolVersion = "0.1.0";

// Everything needed to reproduce a run bit-exactly: the resolved
// configuration, seeds, input hashes, BLAS backend and thread count, plus
// the planned output paths. Written before any work starts.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;    // resolved key -> value
  std::map<std::string, std::string> inputs;    // path -> fnv1a-64 hash
  std::vector<std::string> outputs;             // planned artifact paths
  std::string status = "started";               // flipped on completion/failure
};

std::uint64_t fnv1a_file(const std::string& path);

// Serializes to <out_dir>/manifest.json; status updates rewrite the file.
void write_manifest(const RunManifest& m, const std::string& out_dir);

}  // namespace otmap
