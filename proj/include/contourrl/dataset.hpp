#pragma once

#include <string>
#include <vector>

#include "contourrl/synth.hpp"

namespace crl {

// dataset on disk: <dir>/<id>.pgm + <dir>/<id>.csv per sample plus a
// manifest.json listing ids, relative paths and split assignment
struct DatasetEntry {
  std::string id;
  std::string image_path;    // relative to the manifest directory
  std::string contour_path;  // relative to the manifest directory
  std::string split;         // "train" | "val" | "test"
};

struct DatasetManifest {
  std::vector<DatasetEntry> entries;
};

void save_sample(const std::string& dir, const Sample& s);
Sample load_sample(const std::string& dir, const DatasetEntry& e);

void write_dataset_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_dataset_manifest(const std::string& path);

// loads every sample of the given split ("" loads all)
std::vector<Sample> load_split(const std::string& manifest_path, const std::string& split);

}  // namespace crl
