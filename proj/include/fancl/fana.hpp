#pragma once

#include <cstdint>
#include <string>

#include "fancl/encoder.hpp"
#include "fancl/rng.hpp"
#include "fancl/tensor.hpp"

// Feature-aware noise: a frozen single-channel conv probe scores every pixel
// (sigmoid of the response, bilinearly resized back to the input extents),
// the top round(rho * H * W) pixels by score become the noise mask, and
// masked pixels are zeroed across all channels. Nothing here records
// gradients; the probe is a snapshot, refreshed at epoch boundaries when it
// mirrors a branch layer.

namespace fancl {

enum class ProbeSource {
    dedicated,         // frozen random conv, independent of the branches
    branch_conv,       // channel-mean collapse of the branch's first conv
    branch_batchnorm,  // same, with the first batchnorm folded in
};

ProbeSource probe_source_from_string(const std::string& name);
const char* to_string(ProbeSource source);

template <typename T>
struct ActivationProbe {
    Tensor<T> w;  // (1, C, k, k)
    Tensor<T> b;  // (1)
    std::int64_t stride = 1;
    std::int64_t pad = 1;
};

struct FanaConfig {
    double rho = 0.05;                             // proportion of pixels noised
    ProbeSource source = ProbeSource::dedicated;
    std::int64_t patch = 1;                        // >1 groups pixels into patch x patch tiles

    void validate() const;
};

/// Probe snapshot. The dedicated source draws fresh uniform(+-sqrt(1/fan_in))
/// weights from `seed`; the branch sources collapse theta's first stage to a
/// single output channel (mean over output channels), inheriting its stride.
template <typename T>
ActivationProbe<T> make_probe(ProbeSource source, const EncoderConfig& cfg,
                              const BranchParams<T>& theta, std::uint64_t seed);

/// A(x) = bilinear_resize(sigmoid(probe(x)), (H, W)) for one (C, H, W)
/// image; plain kernel calls, no tape.
template <typename T>
Tensor<T> activation_map(const ActivationProbe<T>& probe, const Tensor<T>& image);

/// Binary (H, W) mask with exactly round(rho * H * W) ones, placed on the
/// highest activations; equal scores resolve in row-major order. patch > 1
/// ranks whole tiles by total activation instead, truncating the last tile
/// row-major so the count still lands exactly.
template <typename T>
Tensor<std::int32_t> noise_mask(const Tensor<T>& map, double rho, std::int64_t patch = 1);

/// Zeroes every channel of masked pixels; unmasked pixels stay bit-identical.
template <typename T>
Tensor<T> apply_pepper_noise(const Tensor<T>& image, const Tensor<std::int32_t>& mask);

/// Full pipeline for one image: probe, mask, contaminate.
template <typename T>
Tensor<T> fana(const ActivationProbe<T>& probe, const FanaConfig& cfg, const Tensor<T>& image);

}  // namespace fancl
