#pragma once

#include <cstdint>

#include "fancl/errors.hpp"
#include "fancl/rng.hpp"
#include "fancl/tensor.hpp"

// Training-time augmentation: optional horizontal flip, zero-pad, random
// crop back to the original extents. The random draw is separated from the
// application so one draw can transform an image and its noised twin with
// identical geometry.

namespace fancl {

struct AugmentConfig {
    double flip_p = 0.5;
    std::int64_t pad = 10;

    void validate() const {
        if (flip_p < 0.0 || flip_p > 1.0) throw ConfigError("augment: flip_p must be in [0, 1]");
        if (pad < 0) throw ConfigError("augment: pad must be >= 0");
    }
};

struct AugmentDraw {
    bool flip = false;
    std::int64_t dy = 0;  // crop offset within the padded image
    std::int64_t dx = 0;
};

inline AugmentDraw draw_augment(Rng& rng, const AugmentConfig& cfg) {
    AugmentDraw d;
    d.flip = rng.bernoulli(cfg.flip_p);
    d.dy = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * cfg.pad + 1)));
    d.dx = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * cfg.pad + 1)));
    return d;
}

template <typename T>
Tensor<T> apply_augment(const Tensor<T>& image, const AugmentDraw& draw,
                        const AugmentConfig& cfg) {
    cfg.validate();
    if (image.rank() != 3)
        throw ShapeError("augment expects one (C, H, W) image, got " +
                         dims_to_string(image.dims()));
    if (draw.dy < 0 || draw.dy > 2 * cfg.pad || draw.dx < 0 || draw.dx > 2 * cfg.pad)
        throw ContractError("augment: crop offset outside the padded extents");
    const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    Tensor<T> out({c, h, w});
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                // Position in the padded image, then back to source pixels.
                const std::int64_t sy = y + draw.dy - cfg.pad;
                const std::int64_t sx = x + draw.dx - cfg.pad;
                T v = T(0);
                if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
                    const std::int64_t px = draw.flip ? w - 1 - sx : sx;
                    v = image.at(ch, sy, px);
                }
                out.at(ch, y, x) = v;
            }
    return out;
}

}  // namespace fancl
