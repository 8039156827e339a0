#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace crl {

inline constexpr const char* kArtifactVersion = "0.1.0";

// FNV-1a 64-bit digest; cheap, dependency-free, and stable across platforms
uint64_t fnv1a64(const void* data, size_t n);
uint64_t fnv1a64_file(const std::string& path);  // throws Error if unreadable
std::string hex64(uint64_t v);

struct ManifestEntry {
  std::string path;    // relative to the manifest's directory
  std::string digest;  // fnv-1a 64 of the file bytes, lowercase hex
};

// record of one CLI run: enough to re-run it bit-identically and to check
// that a re-run produced the same bytes.  Wall-clock timestamps live in the
// sidecar run log, never here, so identical runs write identical manifests.
struct RunManifest {
  std::string command;
  std::string artifact_version = kArtifactVersion;
  uint64_t seed = 0;
  nlohmann::json config;  // fully resolved config the run actually used
  std::vector<ManifestEntry> inputs;
  std::vector<ManifestEntry> outputs;
};

ManifestEntry digest_entry(const std::string& file_path, const std::string& base_dir);

// deterministic serialization (sorted keys, sorted entry lists) written
// atomically via a temp file + rename
void write_run_manifest(const std::string& path, const RunManifest& m);
RunManifest read_run_manifest(const std::string& path);

// appends "<utc timestamp> <message>" to a plain-text log
void append_run_log(const std::string& path, const std::string& message);

}  // namespace crl
