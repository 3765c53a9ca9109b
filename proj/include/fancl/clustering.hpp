#pragma once

#include <cstdint>
#include <vector>

#include "fancl/tensor.hpp"

// DBSCAN over precomputed cosine distances, producing the per-epoch pseudo
// labels shared by all three feature spaces. Everything here is exact and
// single-threaded so a labeling is reproducible bit-for-bit.

namespace fancl {

inline constexpr std::int32_t kOutlier = -1;

struct DbscanConfig {
    double eps = 0.6;
    std::int64_t min_pts = 4;

    void validate() const;
};

struct PseudoLabeling {
    std::vector<std::int32_t> labels;  // cluster id in [0, num_clusters) or kOutlier
    std::int32_t num_clusters = 0;
};

/// d(i,j) = 1 - f_i . f_j for unit rows; symmetric, zero diagonal, clamped
/// to [0, 2]. Rows must be unit-norm within 1e-6.
template <typename T>
Tensor<T> pairwise_cosine_distance(const Tensor<T>& features);

/// Standard DBSCAN on a precomputed metric. A point is core iff it has at
/// least min_pts neighbors within eps (itself included). Clusters are the
/// connected components of core points; border points join the cluster of
/// the lowest-index core point that reaches them. Cluster ids are assigned
/// in order of each cluster's first member index.
template <typename T>
PseudoLabeling dbscan(const Tensor<T>& dist, const DbscanConfig& cfg);

/// Labels replicated across the three spaces plus the epoch's training pool
/// (indices of non-outlier samples, ascending).
struct LabeledView {
    std::vector<std::int32_t> labels;
    std::vector<std::int64_t> pool;
    std::int32_t num_clusters = 0;
};

template <typename T>
LabeledView assign_pseudo_labels(const PseudoLabeling& labeling, const Tensor<T>& original,
                                 const Tensor<T>& noised, const Tensor<T>& fused);

/// Fraction of non-outlier samples whose cluster's dominant true identity
/// they share. Synthetic-data diagnostic; errors when everything is outlier.
double cluster_purity(const PseudoLabeling& labeling, const std::vector<std::int32_t>& truth);

}  // namespace fancl
