#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fancl/tensor.hpp"

// Dataset manifests are JSON lines, one record per image:
//   {"id": "<identity>", "path": "<tensor file>", "split": "train|query|gallery"}
// Paths resolve relative to the manifest's directory. Identity strings map
// to dense integer ids by first appearance in the manifest.

namespace fancl {

struct ManifestEntry {
    std::string id;
    std::string path;
    std::string split;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

struct DatasetSplit {
    std::vector<Tensor<float>> images;  // each (C, H, W)
    std::vector<std::int32_t> ids;

    std::int64_t size() const { return static_cast<std::int64_t>(images.size()); }
};

struct Dataset {
    DatasetSplit train;
    DatasetSplit query;
    DatasetSplit gallery;
    std::vector<std::string> identities;  // integer id -> manifest id string
};

/// Loads every image referenced by the manifest. All images must share one
/// (C, H, W) shape; query and gallery identity sets must overlap so that
/// retrieval is possible.
Dataset load_dataset(const std::string& manifest_path);

}  // namespace fancl
