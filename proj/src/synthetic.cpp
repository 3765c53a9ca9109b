#include "fancl/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "fancl/errors.hpp"
#include "fancl/rng.hpp"
#include "fancl/tensor_io.hpp"

namespace fancl {

namespace fs = std::filesystem;

void SyntheticConfig::validate() const {
    if (n_identities < 2) throw ConfigError("synthetic: need at least 2 identities");
    if (channels < 1 || height < 4 || width < 4)
        throw ConfigError("synthetic: image extents too small");
    if (images_per_identity / 10 < 1 ||
        images_per_identity - (images_per_identity * 6) / 10 - images_per_identity / 10 < 1)
        throw ConfigError("synthetic: images_per_identity too small for a 60/10/30 split");
    if (rotation_deg < 0.0 || translate_px < 0.0 || brightness < 0.0 || noise_sigma < 0.0)
        throw ConfigError("synthetic: jitter ranges must be non-negative");
}

namespace {

struct Blob {
    double cx, cy, sigma;
    std::vector<double> color;  // per channel
};

struct BasePattern {
    std::vector<double> bg_top, bg_bottom;  // per channel
    std::vector<Blob> blobs;
};

BasePattern base_pattern(const SyntheticConfig& cfg, std::int64_t identity) {
    Rng rng = Rng(cfg.seed).stream("identity").stream(static_cast<std::uint64_t>(identity))
                  .stream("base");
    BasePattern p;
    for (std::int64_t c = 0; c < cfg.channels; ++c) p.bg_top.push_back(rng.uniform(0.0, 0.35));
    for (std::int64_t c = 0; c < cfg.channels; ++c) p.bg_bottom.push_back(rng.uniform(0.0, 0.35));
    const std::int64_t n_blobs = 3 + static_cast<std::int64_t>(rng.below(4));  // 3..6
    const double extent = static_cast<double>(std::min(cfg.height, cfg.width));
    for (std::int64_t b = 0; b < n_blobs; ++b) {
        Blob blob;
        blob.cx = rng.uniform(0.2, 0.8) * static_cast<double>(cfg.width - 1);
        blob.cy = rng.uniform(0.2, 0.8) * static_cast<double>(cfg.height - 1);
        blob.sigma = rng.uniform(0.06, 0.16) * extent;
        for (std::int64_t c = 0; c < cfg.channels; ++c)
            blob.color.push_back(rng.uniform(0.3, 1.0));
        p.blobs.push_back(std::move(blob));
    }
    return p;
}

}  // namespace

Tensor<float> render_synthetic_image(const SyntheticConfig& cfg, std::int64_t identity,
                                     std::int64_t image_index) {
    cfg.validate();
    if (identity < 0 || identity >= cfg.n_identities)
        throw ContractError("synthetic: identity " + std::to_string(identity) + " outside " +
                            std::to_string(cfg.n_identities));
    if (image_index < 0 || image_index >= cfg.images_per_identity)
        throw ContractError("synthetic: image index " + std::to_string(image_index) +
                            " outside " + std::to_string(cfg.images_per_identity));
    const BasePattern base = base_pattern(cfg, identity);
    Rng rng = Rng(cfg.seed).stream("identity").stream(static_cast<std::uint64_t>(identity))
                  .stream("image").stream(static_cast<std::uint64_t>(image_index));

    const double angle = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) * M_PI / 180.0;
    const double tx = rng.uniform(-cfg.translate_px, cfg.translate_px);
    const double ty = rng.uniform(-cfg.translate_px, cfg.translate_px);
    const double bright = 1.0 + rng.uniform(-cfg.brightness, cfg.brightness);

    // Jitter moves the blob geometry: rotate about the image center, then
    // translate. The background gradient stays put; brightness and noise
    // cover photometric variation.
    const double cx0 = static_cast<double>(cfg.width - 1) / 2.0;
    const double cy0 = static_cast<double>(cfg.height - 1) / 2.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    std::vector<Blob> blobs = base.blobs;
    for (Blob& b : blobs) {
        const double dx = b.cx - cx0, dy = b.cy - cy0;
        b.cx = cx0 + ca * dx - sa * dy + tx;
        b.cy = cy0 + sa * dx + ca * dy + ty;
    }

    Tensor<float> img({cfg.channels, cfg.height, cfg.width});
    for (std::int64_t c = 0; c < cfg.channels; ++c)
        for (std::int64_t y = 0; y < cfg.height; ++y) {
            const double t = cfg.height > 1
                                 ? static_cast<double>(y) / static_cast<double>(cfg.height - 1)
                                 : 0.0;
            const double bg = base.bg_top[c] * (1.0 - t) + base.bg_bottom[c] * t;
            for (std::int64_t x = 0; x < cfg.width; ++x) {
                double v = bg;
                for (const Blob& b : blobs) {
                    const double dx = static_cast<double>(x) - b.cx;
                    const double dy = static_cast<double>(y) - b.cy;
                    v += b.color[c] *
                         std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
                }
                img.at(c, y, x) = static_cast<float>(v * bright);
            }
        }
    for (std::int64_t i = 0; i < img.numel(); ++i) {
        double v = double(img[i]) + rng.normal() * cfg.noise_sigma;
        img[i] = static_cast<float>(std::min(1.0, std::max(0.0, v)));
    }
    return img;
}

std::vector<ManifestEntry> generate_synthetic(const SyntheticConfig& cfg,
                                              const std::string& out_dir) {
    cfg.validate();
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "images", ec);
    if (ec) throw IoError("cannot create '" + out_dir + "/images': " + ec.message());

    const std::int64_t n_train = (cfg.images_per_identity * 6) / 10;
    const std::int64_t n_query = cfg.images_per_identity / 10;

    std::vector<ManifestEntry> entries;
    for (std::int64_t i = 0; i < cfg.n_identities; ++i) {
        char id_name[32];
        std::snprintf(id_name, sizeof(id_name), "id%03lld", static_cast<long long>(i));
        for (std::int64_t j = 0; j < cfg.images_per_identity; ++j) {
            char file_name[64];
            std::snprintf(file_name, sizeof(file_name), "images/%s_img%03lld.ftns", id_name,
                          static_cast<long long>(j));
            Tensor<float> img = render_synthetic_image(cfg, i, j);
            io::save_tensor((fs::path(out_dir) / file_name).string(), img);
            ManifestEntry e;
            e.id = id_name;
            e.path = file_name;
            e.split = j < n_train ? "train" : j < n_train + n_query ? "query" : "gallery";
            entries.push_back(std::move(e));
        }
    }
    write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), entries);
    return entries;
}

}  // namespace fancl
