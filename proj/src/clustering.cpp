#include "fancl/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fancl/errors.hpp"

namespace fancl {

void DbscanConfig::validate() const {
    if (!(eps > 0.0)) throw ConfigError("dbscan: eps must be > 0");
    if (min_pts < 1) throw ConfigError("dbscan: min_pts must be >= 1");
}

template <typename T>
Tensor<T> pairwise_cosine_distance(const Tensor<T>& features) {
    if (features.rank() != 2)
        throw ShapeError("pairwise distance expects (N, D), got " +
                         dims_to_string(features.dims()));
    const std::int64_t n = features.dim(0), d = features.dim(1);
    for (std::int64_t i = 0; i < n; ++i) {
        double sq = 0.0;
        const T* row = &features[i * d];
        for (std::int64_t j = 0; j < d; ++j) sq += double(row[j]) * double(row[j]);
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-6)
            throw ContractError("pairwise distance: row " + std::to_string(i) +
                                " is not unit-norm");
    }
    Tensor<T> dist({n, n});
    for (std::int64_t i = 0; i < n; ++i) {
        dist.at(i, i) = T(0);
        for (std::int64_t j = i + 1; j < n; ++j) {
            T dot = 0;
            const T* a = &features[i * d];
            const T* b = &features[j * d];
            for (std::int64_t k = 0; k < d; ++k) dot += a[k] * b[k];
            T v = T(1) - dot;
            if (v < T(0)) v = T(0);
            if (v > T(2)) v = T(2);
            dist.at(i, j) = v;
            dist.at(j, i) = v;
        }
    }
    return dist;
}

namespace {

struct UnionFind {
    std::vector<std::int64_t> parent;
    explicit UnionFind(std::int64_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    std::int64_t find(std::int64_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::int64_t a, std::int64_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) parent[b] = a;  // keep the lowest index as the root
        else parent[a] = b;
    }
};

template <typename T>
void check_distance_matrix(const Tensor<T>& dist) {
    if (dist.rank() != 2 || dist.dim(0) != dist.dim(1))
        throw ShapeError("dbscan expects a square distance matrix, got " +
                         dims_to_string(dist.dims()));
    const std::int64_t n = dist.dim(0);
    for (std::int64_t i = 0; i < n; ++i) {
        if (dist.at(i, i) != T(0))
            throw ContractError("distance matrix has nonzero diagonal at " + std::to_string(i));
        for (std::int64_t j = i + 1; j < n; ++j) {
            const double a = dist.at(i, j), b = dist.at(j, i);
            if (std::abs(a - b) > 1e-9)
                throw ContractError("distance matrix asymmetric at (" + std::to_string(i) + ", " +
                                    std::to_string(j) + ")");
            if (a < 0.0 || a > 2.0 || !std::isfinite(a))
                throw ContractError("distance out of [0, 2] at (" + std::to_string(i) + ", " +
                                    std::to_string(j) + ")");
        }
    }
}

}  // namespace

template <typename T>
PseudoLabeling dbscan(const Tensor<T>& dist, const DbscanConfig& cfg) {
    cfg.validate();
    check_distance_matrix(dist);
    const std::int64_t n = dist.dim(0);
    const T eps = static_cast<T>(cfg.eps);

    std::vector<bool> core(n, false);
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t neighbors = 0;
        for (std::int64_t j = 0; j < n; ++j)
            if (dist.at(i, j) <= eps) ++neighbors;  // includes the point itself
        core[i] = neighbors >= cfg.min_pts;
    }

    UnionFind uf(n);
    for (std::int64_t i = 0; i < n; ++i) {
        if (!core[i]) continue;
        for (std::int64_t j = i + 1; j < n; ++j)
            if (core[j] && dist.at(i, j) <= eps) uf.unite(i, j);
    }

    // Component root per sample: cores use their own component, borders the
    // component of the lowest-index core within eps.
    std::vector<std::int64_t> root(n, -1);
    for (std::int64_t i = 0; i < n; ++i) {
        if (core[i]) {
            root[i] = uf.find(i);
            continue;
        }
        for (std::int64_t j = 0; j < n; ++j) {
            if (core[j] && dist.at(i, j) <= eps) {
                root[i] = uf.find(j);
                break;
            }
        }
    }

    // Compact ids in order of first member index.
    PseudoLabeling out;
    out.labels.assign(n, kOutlier);
    std::map<std::int64_t, std::int32_t> id_of;
    for (std::int64_t i = 0; i < n; ++i) {
        if (root[i] < 0) continue;
        auto [it, fresh] = id_of.emplace(root[i], out.num_clusters);
        if (fresh) ++out.num_clusters;
        out.labels[i] = it->second;
    }
    return out;
}

template <typename T>
LabeledView assign_pseudo_labels(const PseudoLabeling& labeling, const Tensor<T>& original,
                                 const Tensor<T>& noised, const Tensor<T>& fused) {
    const auto n = static_cast<std::int64_t>(labeling.labels.size());
    for (const Tensor<T>* space : {&original, &noised, &fused}) {
        if (space->rank() != 2 || space->dim(0) != n)
            throw ContractError("pseudo-label assignment: feature batch dims " +
                                dims_to_string(space->dims()) + " do not cover " +
                                std::to_string(n) + " labeled samples");
    }
    LabeledView view;
    view.labels = labeling.labels;
    view.num_clusters = labeling.num_clusters;
    for (std::int64_t i = 0; i < n; ++i)
        if (labeling.labels[i] != kOutlier) view.pool.push_back(i);
    return view;
}

double cluster_purity(const PseudoLabeling& labeling, const std::vector<std::int32_t>& truth) {
    if (labeling.labels.size() != truth.size())
        throw ContractError("purity: labeling covers " + std::to_string(labeling.labels.size()) +
                            " samples, truth " + std::to_string(truth.size()));
    // cluster -> identity -> count
    std::map<std::int32_t, std::map<std::int32_t, std::int64_t>> tally;
    std::int64_t covered = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const std::int32_t c = labeling.labels[i];
        if (c == kOutlier) continue;
        ++tally[c][truth[i]];
        ++covered;
    }
    if (covered == 0) throw ContractError("purity undefined: every sample is an outlier");
    std::int64_t agree = 0;
    for (const auto& [cluster, counts] : tally) {
        std::int64_t best = 0;
        for (const auto& [identity, count] : counts) best = std::max(best, count);
        agree += best;
    }
    return static_cast<double>(agree) / static_cast<double>(covered);
}

template Tensor<float> pairwise_cosine_distance<float>(const Tensor<float>&);
template Tensor<double> pairwise_cosine_distance<double>(const Tensor<double>&);
template PseudoLabeling dbscan<float>(const Tensor<float>&, const DbscanConfig&);
template PseudoLabeling dbscan<double>(const Tensor<double>&, const DbscanConfig&);
template LabeledView assign_pseudo_labels<float>(const PseudoLabeling&, const Tensor<float>&,
                                                 const Tensor<float>&, const Tensor<float>&);
template LabeledView assign_pseudo_labels<double>(const PseudoLabeling&, const Tensor<double>&,
                                                  const Tensor<double>&, const Tensor<double>&);

}  // namespace fancl
