#pragma once

#include <cstdint>
#include <vector>

#include "fancl/tensor.hpp"

// Retrieval scoring: rank the gallery by cosine similarity per query, then
// aggregate average precision and CMC hit rates. Queries with no relevant
// gallery item cannot be retrieved at any rank and are excluded from both
// the mAP and CMC denominators.

namespace fancl {

struct Metrics {
    double map = 0.0;
    double rank1 = 0.0;
    double rank5 = 0.0;
    double rank10 = 0.0;
    std::int64_t n_query = 0;        // queries scored (>= 1 relevant item)
    std::int64_t n_query_skipped = 0;
    std::int64_t n_gallery = 0;
};

/// Gallery indices sorted by descending similarity to `query`, equal scores
/// by ascending index. `query` is (D), `gallery` (N, D), all unit rows.
template <typename T>
std::vector<std::int64_t> rank_gallery(const Tensor<T>& query, const Tensor<T>& gallery);

/// AP over a relevance-flagged ranking: mean over relevant positions k of
/// (relevant within top k) / k. At least one flag must be set.
double average_precision(const std::vector<bool>& relevance);

/// Full retrieval evaluation. Relevance means equal identity labels.
template <typename T>
Metrics evaluate(const Tensor<T>& query_features, const std::vector<std::int32_t>& query_ids,
                 const Tensor<T>& gallery_features,
                 const std::vector<std::int32_t>& gallery_ids);

}  // namespace fancl
