#include "fancl/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fancl/errors.hpp"

namespace fancl {

namespace {

template <typename T>
void require_unit_rows(const Tensor<T>& feats, const char* who) {
    if (feats.rank() != 2)
        throw ShapeError(std::string(who) + " features must be (N, D), got " +
                         dims_to_string(feats.dims()));
    const std::int64_t n = feats.dim(0), d = feats.dim(1);
    for (std::int64_t i = 0; i < n; ++i) {
        double sq = 0.0;
        const T* row = &feats[i * d];
        for (std::int64_t j = 0; j < d; ++j) sq += double(row[j]) * double(row[j]);
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-6)
            throw ContractError(std::string(who) + " feature row " + std::to_string(i) +
                                " is not unit-norm");
    }
}

template <typename T>
std::vector<std::int64_t> rank_row(const T* q, const Tensor<T>& gallery) {
    const std::int64_t n = gallery.dim(0), d = gallery.dim(1);
    std::vector<double> sim(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const T* g = &gallery[i * d];
        double dot = 0.0;
        for (std::int64_t j = 0; j < d; ++j) dot += double(q[j]) * double(g[j]);
        sim[i] = dot;
    }
    std::vector<std::int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        if (sim[a] != sim[b]) return sim[a] > sim[b];
        return a < b;
    });
    return order;
}

}  // namespace

template <typename T>
std::vector<std::int64_t> rank_gallery(const Tensor<T>& query, const Tensor<T>& gallery) {
    if (gallery.rank() != 2 || gallery.dim(0) == 0)
        throw ContractError("rank_gallery: empty or malformed gallery " +
                            dims_to_string(gallery.dims()));
    if (query.rank() != 1 || query.dim(0) != gallery.dim(1))
        throw ShapeError("rank_gallery: query dims " + dims_to_string(query.dims()) +
                         " do not match gallery " + dims_to_string(gallery.dims()));
    require_unit_rows(gallery, "gallery");
    Tensor<T> q2({1, query.dim(0)}, std::vector<T>(query.data().begin(), query.data().end()));
    require_unit_rows(q2, "query");
    return rank_row(&query[0], gallery);
}

double average_precision(const std::vector<bool>& relevance) {
    std::int64_t total_relevant = 0;
    for (bool r : relevance) total_relevant += r ? 1 : 0;
    if (total_relevant == 0)
        throw ContractError("average precision undefined: no relevant items in ranking");
    double sum = 0.0;
    std::int64_t seen = 0;
    for (std::size_t k = 0; k < relevance.size(); ++k) {
        if (!relevance[k]) continue;
        ++seen;
        sum += static_cast<double>(seen) / static_cast<double>(k + 1);
    }
    return sum / static_cast<double>(total_relevant);
}

template <typename T>
Metrics evaluate(const Tensor<T>& query_features, const std::vector<std::int32_t>& query_ids,
                 const Tensor<T>& gallery_features,
                 const std::vector<std::int32_t>& gallery_ids) {
    if (query_features.rank() != 2 || query_features.dim(0) == 0)
        throw ContractError("evaluate: empty query set");
    if (gallery_features.rank() != 2 || gallery_features.dim(0) == 0)
        throw ContractError("evaluate: empty gallery set");
    if (query_features.dim(1) != gallery_features.dim(1))
        throw ShapeError("evaluate: query dim " + std::to_string(query_features.dim(1)) +
                         " vs gallery dim " + std::to_string(gallery_features.dim(1)));
    if (static_cast<std::int64_t>(query_ids.size()) != query_features.dim(0) ||
        static_cast<std::int64_t>(gallery_ids.size()) != gallery_features.dim(0))
        throw ContractError("evaluate: label counts do not match feature batches");
    require_unit_rows(query_features, "query");
    require_unit_rows(gallery_features, "gallery");

    const std::int64_t nq = query_features.dim(0), ng = gallery_features.dim(0);
    const std::int64_t d = query_features.dim(1);
    Metrics m;
    m.n_gallery = ng;
    double ap_sum = 0.0;
    std::int64_t hit1 = 0, hit5 = 0, hit10 = 0;
    for (std::int64_t q = 0; q < nq; ++q) {
        std::int64_t relevant = 0;
        for (std::int64_t g = 0; g < ng; ++g)
            if (gallery_ids[g] == query_ids[q]) ++relevant;
        if (relevant == 0) {
            ++m.n_query_skipped;
            continue;
        }
        const std::vector<std::int64_t> order = rank_row(&query_features[q * d],
                                                         gallery_features);
        std::vector<bool> rel(order.size());
        std::int64_t first_hit = -1;
        for (std::size_t k = 0; k < order.size(); ++k) {
            rel[k] = gallery_ids[order[k]] == query_ids[q];
            if (rel[k] && first_hit < 0) first_hit = static_cast<std::int64_t>(k);
        }
        ap_sum += average_precision(rel);
        if (first_hit < 1) ++hit1;
        if (first_hit < 5) ++hit5;
        if (first_hit < 10) ++hit10;
        ++m.n_query;
    }
    if (m.n_query == 0) throw ContractError("evaluate: no query has a relevant gallery item");
    m.map = ap_sum / static_cast<double>(m.n_query);
    m.rank1 = static_cast<double>(hit1) / static_cast<double>(m.n_query);
    m.rank5 = static_cast<double>(hit5) / static_cast<double>(m.n_query);
    m.rank10 = static_cast<double>(hit10) / static_cast<double>(m.n_query);
    return m;
}

template std::vector<std::int64_t> rank_gallery<float>(const Tensor<float>&,
                                                       const Tensor<float>&);
template std::vector<std::int64_t> rank_gallery<double>(const Tensor<double>&,
                                                        const Tensor<double>&);
template Metrics evaluate<float>(const Tensor<float>&, const std::vector<std::int32_t>&,
                                 const Tensor<float>&, const std::vector<std::int32_t>&);
template Metrics evaluate<double>(const Tensor<double>&, const std::vector<std::int32_t>&,
                                  const Tensor<double>&, const std::vector<std::int32_t>&);

}  // namespace fancl
