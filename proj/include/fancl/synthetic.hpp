#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fancl/dataset.hpp"
#include "fancl/tensor.hpp"

// Synthetic identity corpus: each identity owns a base pattern (background
// gradient plus a handful of colored Gaussian blobs); each image renders
// that pattern under a small random rotation/translation/brightness jitter
// with additive pixel noise. Per identity, the first 60% of images are the
// train split, the next 10% query, the rest gallery.

namespace fancl {

struct SyntheticConfig {
    std::int64_t n_identities = 10;
    std::int64_t images_per_identity = 40;
    std::int64_t channels = 3;
    std::int64_t height = 32;
    std::int64_t width = 32;
    std::uint64_t seed = 0;
    double rotation_deg = 15.0;   // per-image rotation drawn in +-rotation_deg
    double translate_px = 3.0;    // per-image shift drawn in +-translate_px
    double brightness = 0.1;      // multiplicative jitter in 1 +- brightness
    double noise_sigma = 0.02;    // additive Gaussian pixel noise

    void validate() const;
};

/// One rendered image, (C, H, W) in [0, 1]; pure function of (config, identity,
/// image index).
Tensor<float> render_synthetic_image(const SyntheticConfig& cfg, std::int64_t identity,
                                     std::int64_t image_index);

/// Writes images/<id>_<img>.ftns files plus manifest.jsonl under `out_dir`
/// and returns the manifest entries (paths relative to out_dir).
std::vector<ManifestEntry> generate_synthetic(const SyntheticConfig& cfg,
                                              const std::string& out_dir);

}  // namespace fancl
