#include "contourrl/dataset.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "contourrl/contour.hpp"
#include "contourrl/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace crl {

void save_sample(const std::string& dir, const Sample& s) {
  fs::create_directories(dir);
  write_pgm((fs::path(dir) / (s.id + ".pgm")).string(), s.image);
  write_contour_csv((fs::path(dir) / (s.id + ".csv")).string(), s.contour);
}

Sample load_sample(const std::string& dir, const DatasetEntry& e) {
  Sample s;
  s.id = e.id;
  s.image = read_pgm((fs::path(dir) / e.image_path).string());
  s.contour = read_contour_csv((fs::path(dir) / e.contour_path).string());
  return s;
}

void write_dataset_manifest(const std::string& path, const DatasetManifest& m) {
  json entries = json::array();
  for (const DatasetEntry& e : m.entries) {
    entries.push_back({{"id", e.id},
                       {"image", e.image_path},
                       {"contour", e.contour_path},
                       {"split", e.split}});
  }
  json doc{{"samples", entries}};
  std::ofstream out(path);
  if (!out) throw Error("cannot open for write: " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw Error("short write: " + path);
}

DatasetManifest read_dataset_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& ex) {
    throw ParseError(std::string("bad dataset manifest: ") + ex.what(), 0);
  }
  DatasetManifest m;
  for (const json& e : doc.at("samples")) {
    m.entries.push_back({e.at("id").get<std::string>(), e.at("image").get<std::string>(),
                         e.at("contour").get<std::string>(), e.at("split").get<std::string>()});
  }
  return m;
}

std::vector<Sample> load_split(const std::string& manifest_path, const std::string& split) {
  DatasetManifest m = read_dataset_manifest(manifest_path);
  std::string dir = fs::path(manifest_path).parent_path().string();
  if (dir.empty()) dir = ".";
  std::vector<Sample> out;
  for (const DatasetEntry& e : m.entries)
    if (split.empty() || e.split == split) out.push_back(load_sample(dir, e));
  return out;
}

}  // namespace crl
