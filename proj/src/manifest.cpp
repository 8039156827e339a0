#include "contourrl/manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "contourrl/errors.hpp"

namespace fs = std::filesystem;

namespace crl {

uint64_t fnv1a64(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for digest: " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ManifestEntry digest_entry(const std::string& file_path, const std::string& base_dir) {
  ManifestEntry e;
  e.path = fs::relative(file_path, base_dir).generic_string();
  e.digest = hex64(fnv1a64_file(file_path));
  return e;
}

namespace {

nlohmann::json entries_json(std::vector<ManifestEntry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
  nlohmann::json arr = nlohmann::json::array();
  for (const ManifestEntry& e : entries) arr.push_back({{"path", e.path}, {"digest", e.digest}});
  return arr;
}

std::vector<ManifestEntry> entries_from_json(const nlohmann::json& arr) {
  std::vector<ManifestEntry> out;
  for (const auto& e : arr) out.push_back({e.at("path").get<std::string>(),
                                           e.at("digest").get<std::string>()});
  return out;
}

}  // namespace

void write_run_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::json doc{{"command", m.command},
                     {"artifact_version", m.artifact_version},
                     {"seed", m.seed},
                     {"config", m.config},
                     {"inputs", entries_json(m.inputs)},
                     {"outputs", entries_json(m.outputs)}};
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open for write: " + tmp);
    out << doc.dump(2) << "\n";
    if (!out) throw Error("short write: " + tmp);
  }
  fs::rename(tmp, path);
}

RunManifest read_run_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad manifest json: ") + e.what(), 0);
  }
  RunManifest m;
  m.command = doc.at("command").get<std::string>();
  m.artifact_version = doc.at("artifact_version").get<std::string>();
  m.seed = doc.at("seed").get<uint64_t>();
  m.config = doc.at("config");
  m.inputs = entries_from_json(doc.at("inputs"));
  m.outputs = entries_from_json(doc.at("outputs"));
  return m;
}

void append_run_log(const std::string& path, const std::string& message) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot open for append: " + path);
  std::time_t now = std::time(nullptr);
  char stamp[32];
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  out << stamp << " " << message << "\n";
}

}  // namespace crl
