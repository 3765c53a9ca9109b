#include "fancl/fana.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fancl/errors.hpp"
#include "fancl/kernels.hpp"

namespace fancl {

ProbeSource probe_source_from_string(const std::string& name) {
    if (name == "dedicated") return ProbeSource::dedicated;
    if (name == "branch-conv") return ProbeSource::branch_conv;
    if (name == "branch-batchnorm") return ProbeSource::branch_batchnorm;
    throw ConfigError("unknown probe source '" + name +
                      "' (expected dedicated | branch-conv | branch-batchnorm)");
}

const char* to_string(ProbeSource source) {
    switch (source) {
        case ProbeSource::dedicated: return "dedicated";
        case ProbeSource::branch_conv: return "branch-conv";
        case ProbeSource::branch_batchnorm: return "branch-batchnorm";
    }
    return "?";
}

void FanaConfig::validate() const {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("fana: rho must be in [0, 1]");
    if (patch < 1) throw ConfigError("fana: patch must be >= 1");
}

template <typename T>
ActivationProbe<T> make_probe(ProbeSource source, const EncoderConfig& cfg,
                              const BranchParams<T>& theta, std::uint64_t seed) {
    ActivationProbe<T> probe;
    if (source == ProbeSource::dedicated) {
        const std::int64_t k = cfg.kernel, c = cfg.in_channels;
        const std::int64_t fan_in = c * k * k;
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        Rng rng = Rng(seed).stream("fana_probe");
        probe.w = Tensor<T>({1, c, k, k});
        for (std::int64_t i = 0; i < probe.w.numel(); ++i)
            probe.w[i] = static_cast<T>(rng.uniform(-bound, bound));
        probe.b = Tensor<T>({1});
        probe.stride = 1;
        probe.pad = 1;
        return probe;
    }

    if (theta.stages.empty()) throw ContractError("probe: branch has no conv stages");
    const ConvStage<T>& s0 = theta.stages.front();
    const std::int64_t co = s0.conv_w.dim(0), ci = s0.conv_w.dim(1);
    const std::int64_t kh = s0.conv_w.dim(2), kw = s0.conv_w.dim(3);
    probe.w = Tensor<T>({1, ci, kh, kw});
    probe.b = Tensor<T>({1});
    probe.stride = cfg.stride;
    probe.pad = cfg.pad;

    // Per-output-channel scale/shift; identity for the plain conv source,
    // batchnorm folded in (eval form, running statistics) otherwise.
    std::vector<double> scale(co, 1.0), shift(co, 0.0);
    if (source == ProbeSource::branch_batchnorm) {
        for (std::int64_t c = 0; c < co; ++c) {
            const double inv = 1.0 / std::sqrt(double(s0.bn.var[c]) + cfg.bn_eps);
            scale[c] = double(s0.bn_g[c]) * inv;
            shift[c] = double(s0.bn_b[c]) - scale[c] * double(s0.bn.mean[c]);
        }
    }
    for (std::int64_t c = 0; c < co; ++c) {
        for (std::int64_t i = 0; i < ci * kh * kw; ++i)
            probe.w[i] += static_cast<T>(scale[c] * double(s0.conv_w[c * ci * kh * kw + i]) /
                                         double(co));
        probe.b[0] += static_cast<T>((scale[c] * double(s0.conv_b[c]) + shift[c]) / double(co));
    }
    return probe;
}

template <typename T>
Tensor<T> activation_map(const ActivationProbe<T>& probe, const Tensor<T>& image) {
    if (image.rank() != 3)
        throw ShapeError("activation map expects one (C, H, W) image, got " +
                         dims_to_string(image.dims()));
    if (image.dim(0) != probe.w.dim(1))
        throw ShapeError("activation map: image has " + std::to_string(image.dim(0)) +
                         " channels, probe expects " + std::to_string(probe.w.dim(1)));
    const std::int64_t h = image.dim(1), w = image.dim(2);
    Tensor<T> batch({1, image.dim(0), h, w}, std::vector<T>(image.data().begin(),
                                                            image.data().end()));
    Tensor<T> resp = kern::conv2d(batch, probe.w, probe.b, probe.stride, probe.pad);
    Tensor<T> act = kern::sigmoid(resp);
    Tensor<T> flat({resp.dim(2), resp.dim(3)},
                   std::vector<T>(act.data().begin(), act.data().end()));
    return kern::bilinear_resize(flat, h, w);
}

template <typename T>
Tensor<std::int32_t> noise_mask(const Tensor<T>& map, double rho, std::int64_t patch) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("fana: rho must be in [0, 1]");
    if (patch < 1) throw ConfigError("fana: patch must be >= 1");
    if (map.rank() != 2)
        throw ShapeError("noise mask expects an (H, W) map, got " + dims_to_string(map.dims()));
    check_finite(map, "activation map");
    const std::int64_t h = map.dim(0), w = map.dim(1);
    const auto k = static_cast<std::int64_t>(std::llround(rho * double(h * w)));
    Tensor<std::int32_t> mask({h, w});
    if (k == 0) return mask;

    if (patch == 1) {
        std::vector<std::int64_t> order(h * w);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
            if (map[a] != map[b]) return map[a] > map[b];
            return a < b;  // row-major precedence among ties
        });
        for (std::int64_t i = 0; i < k; ++i) mask[order[i]] = 1;
        return mask;
    }

    // Tile mode: rank patch x patch tiles by total activation, fill whole
    // tiles, truncate the last one row-major to keep the count exact.
    const std::int64_t th = (h + patch - 1) / patch, tw = (w + patch - 1) / patch;
    std::vector<double> tile_score(th * tw, 0.0);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            tile_score[(y / patch) * tw + x / patch] += double(map.at(y, x));
    std::vector<std::int64_t> order(th * tw);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        if (tile_score[a] != tile_score[b]) return tile_score[a] > tile_score[b];
        return a < b;
    });
    std::int64_t placed = 0;
    for (std::int64_t t : order) {
        if (placed >= k) break;
        const std::int64_t ty = (t / tw) * patch, tx = (t % tw) * patch;
        for (std::int64_t y = ty; y < std::min(ty + patch, h) && placed < k; ++y)
            for (std::int64_t x = tx; x < std::min(tx + patch, w) && placed < k; ++x) {
                mask.at(y, x) = 1;
                ++placed;
            }
    }
    return mask;
}

template <typename T>
Tensor<T> apply_pepper_noise(const Tensor<T>& image, const Tensor<std::int32_t>& mask) {
    if (image.rank() != 3)
        throw ShapeError("pepper noise expects one (C, H, W) image, got " +
                         dims_to_string(image.dims()));
    if (mask.rank() != 2 || mask.dim(0) != image.dim(1) || mask.dim(1) != image.dim(2))
        throw ShapeError("pepper noise: mask dims " + dims_to_string(mask.dims()) +
                         " do not match image spatial dims " + dims_to_string(image.dims()));
    for (std::int64_t i = 0; i < mask.numel(); ++i)
        if (mask[i] != 0 && mask[i] != 1)
            throw ContractError("pepper noise: mask must be binary");
    Tensor<T> out = image;
    const std::int64_t c = image.dim(0), hw = mask.numel();
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < hw; ++i)
            if (mask[i]) out[ch * hw + i] = T(0);
    return out;
}

template <typename T>
Tensor<T> fana(const ActivationProbe<T>& probe, const FanaConfig& cfg, const Tensor<T>& image) {
    cfg.validate();
    Tensor<T> map = activation_map(probe, image);
    Tensor<std::int32_t> mask = noise_mask(map, cfg.rho, cfg.patch);
    return apply_pepper_noise(image, mask);
}

#define FANCL_INSTANTIATE_FANA(T)                                                            \
    template ActivationProbe<T> make_probe<T>(ProbeSource, const EncoderConfig&,            \
                                              const BranchParams<T>&, std::uint64_t);        \
    template Tensor<T> activation_map<T>(const ActivationProbe<T>&, const Tensor<T>&);      \
    template Tensor<std::int32_t> noise_mask<T>(const Tensor<T>&, double, std::int64_t);    \
    template Tensor<T> apply_pepper_noise<T>(const Tensor<T>&, const Tensor<std::int32_t>&); \
    template Tensor<T> fana<T>(const ActivationProbe<T>&, const FanaConfig&, const Tensor<T>&);

FANCL_INSTANTIATE_FANA(float)
FANCL_INSTANTIATE_FANA(double)
#undef FANCL_INSTANTIATE_FANA

}  // namespace fancl
