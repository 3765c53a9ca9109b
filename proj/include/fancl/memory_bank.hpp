#pragma once

#include <cstdint>
#include <vector>

#include "fancl/tensor.hpp"

// Cluster feature memories, one bank per feature space. Entries start as
// normalized cluster means and follow queries with a momentum blend; they
// stay unit-norm so similarity against them is a plain dot product. Banks
// never receive gradients - losses read them as constants.

namespace fancl {

struct MemoryConfig {
    double alpha = 0.1;  // fraction of the old entry kept per update
    void validate() const;
};

template <typename T>
struct MemoryBank {
    Tensor<T> entries;  // (M, D), unit rows

    std::int64_t size() const { return entries.rank() == 2 ? entries.dim(0) : 0; }
    std::int64_t dim() const { return entries.rank() == 2 ? entries.dim(1) : 0; }
};

template <typename T>
struct BankSet {
    MemoryBank<T> original;
    MemoryBank<T> noised;
    MemoryBank<T> fused;
};

/// Per-cluster normalized means, per space independently. `labels` may
/// contain outliers; those samples are skipped. Every cluster id in
/// [0, num_clusters) must have at least one member.
template <typename T>
BankSet<T> init_banks(const Tensor<T>& original, const Tensor<T>& noised, const Tensor<T>& fused,
                      const std::vector<std::int32_t>& labels, std::int32_t num_clusters,
                      double l2_eps = 1e-12);

/// m <- l2_normalize(alpha * m + (1 - alpha) * f_q), touching only `label`.
template <typename T>
void momentum_update(MemoryBank<T>& bank, std::int32_t label, const Tensor<T>& f_q, double alpha,
                     double l2_eps = 1e-12);

/// Read-only copy of one entry.
template <typename T>
Tensor<T> positive_lookup(const MemoryBank<T>& bank, std::int32_t label);

}  // namespace fancl
