#include "fancl/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "fancl/errors.hpp"
#include "fancl/tensor_io.hpp"
#include "json.hpp"

namespace fancl {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path + "'");
    std::vector<ManifestEntry> entries;
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError("manifest '" + path + "' line " + std::to_string(lineno) + ": " +
                              e.what());
        }
        ManifestEntry entry;
        try {
            entry.id = rec.at("id").get<std::string>();
            entry.path = rec.at("path").get<std::string>();
            entry.split = rec.at("split").get<std::string>();
        } catch (const json::exception& e) {
            throw FormatError("manifest '" + path + "' line " + std::to_string(lineno) + ": " +
                              e.what());
        }
        if (entry.split != "train" && entry.split != "query" && entry.split != "gallery")
            throw FormatError("manifest '" + path + "' line " + std::to_string(lineno) +
                              ": unknown split '" + entry.split + "'");
        entries.push_back(std::move(entry));
    }
    if (entries.empty()) throw FormatError("manifest '" + path + "' has no records");
    return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open manifest '" + path + "' for writing");
    for (const ManifestEntry& e : entries) {
        json rec{{"id", e.id}, {"path", e.path}, {"split", e.split}};
        out << rec.dump() << "\n";
    }
    out.flush();
    if (!out) throw IoError("write to manifest '" + path + "' failed");
}

Dataset load_dataset(const std::string& manifest_path) {
    const std::vector<ManifestEntry> entries = read_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();

    Dataset ds;
    std::map<std::string, std::int32_t> id_of;
    Dims shape;
    for (const ManifestEntry& e : entries) {
        auto [it, fresh] = id_of.emplace(e.id, static_cast<std::int32_t>(ds.identities.size()));
        if (fresh) ds.identities.push_back(e.id);
        const fs::path p = fs::path(e.path).is_absolute() ? fs::path(e.path) : base / e.path;
        Tensor<float> img = io::load_tensor<float>(p.string());
        if (img.rank() != 3)
            throw FormatError("image '" + p.string() + "' must be (C, H, W), got " +
                              dims_to_string(img.dims()));
        if (shape.empty()) shape = img.dims();
        else if (img.dims() != shape)
            throw FormatError("image '" + p.string() + "' dims " + dims_to_string(img.dims()) +
                              " differ from earlier images " + dims_to_string(shape));
        DatasetSplit& split = e.split == "train"  ? ds.train
                              : e.split == "query" ? ds.query
                                                   : ds.gallery;
        split.images.push_back(std::move(img));
        split.ids.push_back(it->second);
    }

    std::set<std::int32_t> qids(ds.query.ids.begin(), ds.query.ids.end());
    std::set<std::int32_t> gids(ds.gallery.ids.begin(), ds.gallery.ids.end());
    bool overlap = false;
    for (std::int32_t q : qids)
        if (gids.count(q)) {
            overlap = true;
            break;
        }
    if (!qids.empty() && !overlap)
        throw ContractError("manifest '" + manifest_path +
                            "': no identity appears in both query and gallery");
    return ds;
}

}  // namespace fancl
