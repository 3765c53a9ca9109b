#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fancl/ops.hpp"
#include "fancl/rng.hpp"
#include "fancl/tensor.hpp"

// Dual-branch convolutional encoder. Both branches share one architecture
// (conv -> batchnorm -> relu stages, then GAP -> projection -> batchnorm ->
// l2_normalize) and differ only in their parameter sets; a fusion layer maps
// the concatenated branch embeddings (2D) back to D and re-normalizes.

namespace fancl {

struct EncoderConfig {
    std::vector<std::int64_t> channels = {8, 16, 32};
    std::int64_t in_channels = 3;
    std::int64_t height = 32;
    std::int64_t width = 32;
    std::int64_t dim = 64;  // embedding size D
    std::int64_t kernel = 3;
    std::int64_t stride = 2;
    std::int64_t pad = 1;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
    double l2_eps = 1e-12;

    void validate() const;
};

template <typename T>
struct ConvStage {
    Tensor<T> conv_w;  // (C_out, C_in, k, k)
    Tensor<T> conv_b;  // (C_out)
    Tensor<T> bn_g;    // (C_out)
    Tensor<T> bn_b;    // (C_out)
    ops::BnStats<T> bn;
};

template <typename T>
struct BranchParams {
    std::vector<ConvStage<T>> stages;
    Tensor<T> proj_w;  // (C_last, D); projection feeds a batchnorm, so no bias
    Tensor<T> bn_g;    // (D)
    Tensor<T> bn_b;    // (D)
    ops::BnStats<T> bn;
};

template <typename T>
struct FusionParams {
    Tensor<T> w;  // (2D, D)
    Tensor<T> b;  // (D)
};

/// Trainable tensors in a stable order, names prefixed for optimizer slots
/// and checkpoint sections. Running statistics are not included.
template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> named_params(BranchParams<T>& p,
                                                             const std::string& prefix);
template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> named_params(FusionParams<T>& p,
                                                             const std::string& prefix);

/// Fresh parameter sets. The two branches draw from independent substreams
/// of `seed`, so they start different; biases zero, batchnorm affine at
/// identity, weights uniform in ±sqrt(1/fan_in).
template <typename T>
void init_params(const EncoderConfig& cfg, std::uint64_t seed, BranchParams<T>& theta,
                 BranchParams<T>& theta_prime, FusionParams<T>& fusion);

/// Parameter leaves registered on a tape for one forward/backward pass.
template <typename T>
struct BranchVars {
    struct Stage {
        Var<T> conv_w, conv_b, bn_g, bn_b;
    };
    std::vector<Stage> stages;
    Var<T> proj_w, bn_g, bn_b;
};

template <typename T>
struct FusionVars {
    Var<T> w, b;
};

template <typename T>
BranchVars<T> lift(Tape<T>& tape, BranchParams<T>& p, bool trainable);
template <typename T>
FusionVars<T> lift(Tape<T>& tape, FusionParams<T>& p, bool trainable);

/// Branch forward pass on an existing tape. `images` is (B, C, H, W); the
/// result is (B, D) with unit rows. Training mode uses batch statistics and
/// advances the running estimates in `p`.
template <typename T>
Var<T> branch_graph(Tape<T>& tape, const EncoderConfig& cfg, BranchParams<T>& p,
                    const BranchVars<T>& v, Var<T> images, bool training);

/// Fusion forward pass: l2_normalize(concat(f, f_tilde) * W + b).
template <typename T>
Var<T> fusion_graph(const EncoderConfig& cfg, const FusionVars<T>& v, Var<T> f, Var<T> f_tilde);

/// Convenience no-grad forward for feature extraction; eval mode, running
/// statistics untouched.
template <typename T>
Tensor<T> forward_branch(const EncoderConfig& cfg, const BranchParams<T>& p,
                         const Tensor<T>& images);
template <typename T>
Tensor<T> forward_fusion(const EncoderConfig& cfg, const FusionParams<T>& p, const Tensor<T>& f,
                         const Tensor<T>& f_tilde);

}  // namespace fancl
