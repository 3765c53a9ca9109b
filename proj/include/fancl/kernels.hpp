#pragma once

#include <cstdint>
#include <vector>

#include "fancl/tensor.hpp"

namespace fancl::kern {

// Elementwise. add() broadcasts a rank-1 rhs over the rows of a rank-2 lhs.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, double s);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);

// matmul supports (m,k)x(k,n)->(m,n) and (m,k)x(k)->(m).
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose2d(const Tensor<T>& a);

/// Output extents for conv2d: out = floor((in + 2*pad - k) / stride) + 1.
Dims conv2d_out_dims(const Dims& x, const Dims& w, std::int64_t stride, std::int64_t pad);

/// x: (B,Cin,H,W), w: (Cout,Cin,kh,kw), b: (Cout); zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::int64_t stride, std::int64_t pad);

/// (B,C,H,W) -> (B,C) spatial mean.
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x);

/// Per-channel biased mean/variance. Rank-2 input (B,C) reduces over B;
/// rank-4 input (B,C,H,W) reduces over B,H,W.
template <typename T>
void batchnorm_stats(const Tensor<T>& x, Tensor<T>& mean_out, Tensor<T>& var_out);

/// y = gamma * (x - mean) * invstd + beta, per channel.
template <typename T>
Tensor<T> batchnorm_apply(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const Tensor<T>& mean, const Tensor<T>& invstd);

/// Row-wise unit normalization along the last axis. Norms below eps are
/// clamped to eps instead of dividing by zero. Raw row norms are written to
/// norms_out when non-null.
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, double eps, Tensor<T>* norms_out = nullptr);

template <typename T>
Tensor<T> concat(const std::vector<const Tensor<T>*>& parts, std::int64_t axis);

/// Full reduction to a rank-0 scalar.
template <typename T> Tensor<T> reduce_sum(const Tensor<T>& x);

/// Align-corners bilinear interpolation; image is (H,W) or (H,W,C).
/// Resizing to the input extents returns a bit-identical copy.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& image, std::int64_t out_h, std::int64_t out_w);

// Layout conversions between dataset images (H,W,C) and conv input (C,H,W).
template <typename T> Tensor<T> hwc_to_chw(const Tensor<T>& img);
template <typename T> Tensor<T> chw_to_hwc(const Tensor<T>& img);

/// Stack equal-shape (C,H,W) images into a (B,C,H,W) batch.
template <typename T> Tensor<T> stack_batch(const std::vector<Tensor<T>>& images);

}  // namespace fancl::kern
