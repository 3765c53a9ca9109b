#include <algorithm>
#include <map>
#include <vector>

#include "doctest.h"
#include "fancl/clustering.hpp"
#include "fancl/errors.hpp"
#include "fancl/rng.hpp"
#include "support/reference_dbscan.hpp"
#include "support/test_util.hpp"

using namespace fancl;
using namespace fancl::testing;

namespace {

/// Distance matrix with the stated invariants built from per-point group
/// centers: intra-group distance 0, inter-group distance `gap`.
Tensor<double> block_distances(const std::vector<int>& group_of, double gap) {
    const std::int64_t n = static_cast<std::int64_t>(group_of.size());
    Tensor<double> d({n, n});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j)
            d.at(i, j) = (group_of[static_cast<std::size_t>(i)] ==
                          group_of[static_cast<std::size_t>(j)])
                             ? 0.0
                             : gap;
    return d;
}

}  // namespace

TEST_SUITE("clustering") {

TEST_CASE("cosine distances: self, orthogonal, antipodal") {
    Tensor<double> f({3, 2});
    f.at(0, 0) = 1.0;   // e_x
    f.at(1, 1) = 1.0;   // e_y
    f.at(2, 0) = -1.0;  // -e_x
    const Tensor<double> d = pairwise_cosine_distance(f);
    CHECK(d.at(0, 0) == 0.0);
    CHECK(d.at(1, 1) == 0.0);
    CHECK(d.at(0, 1) == doctest::Approx(1.0));
    CHECK(d.at(0, 2) == doctest::Approx(2.0));
    CHECK(d.at(2, 0) == d.at(0, 2));
}

TEST_CASE("non-unit rows are rejected") {
    Tensor<double> f({1, 2});
    f.at(0, 0) = 0.5;
    CHECK_THROWS_AS((void)pairwise_cosine_distance(f), ContractError);
}

TEST_CASE("two dense groups far apart form two clusters") {
    const Tensor<double> d = block_distances({0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, 1.9);
    DbscanConfig cfg;
    cfg.eps = 0.5;
    cfg.min_pts = 4;
    const PseudoLabeling out = dbscan(d, cfg);
    CHECK(out.num_clusters == 2);
    for (int i = 0; i < 5; ++i) CHECK(out.labels[static_cast<std::size_t>(i)] == 0);
    for (int i = 5; i < 10; ++i) CHECK(out.labels[static_cast<std::size_t>(i)] == 1);
}

TEST_CASE("mutually distant points are all outliers") {
    const Tensor<double> d = block_distances({0, 1, 2, 3, 4, 5}, 1.9);
    DbscanConfig cfg;
    cfg.eps = 0.5;
    cfg.min_pts = 2;
    const PseudoLabeling out = dbscan(d, cfg);
    CHECK(out.num_clusters == 0);
    for (std::int32_t l : out.labels) CHECK(l == kOutlier);
}

TEST_CASE("radius covering everything yields a single cluster") {
    Rng rng(61);
    const Tensor<double> f = random_unit_rows<double>(rng, 20, 4);
    DbscanConfig cfg;
    cfg.eps = 2.0;
    cfg.min_pts = 20;
    const PseudoLabeling out = dbscan(pairwise_cosine_distance(f), cfg);
    CHECK(out.num_clusters == 1);
    for (std::int32_t l : out.labels) CHECK(l == 0);
}

TEST_CASE("border points join the lowest-index core cluster") {
    // Points 0-3 are a dense clump, 4-7 another; point 8 is within eps of
    // exactly one core from each clump, so with min_pts 4 it stays border
    // (only 3 neighbors counting itself) and must pick core 3 over core 4.
    const int n = 9;
    Tensor<double> d({n, n});
    auto set = [&](int i, int j, double v) {
        d.at(i, j) = v;
        d.at(j, i) = v;
    };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) d.at(i, j) = i == j ? 0.0 : 1.9;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) set(i, j, 0.1);
    for (int i = 4; i < 8; ++i)
        for (int j = i + 1; j < 8; ++j) set(i, j, 0.1);
    set(3, 8, 0.4);
    set(4, 8, 0.4);

    DbscanConfig cfg;
    cfg.eps = 0.5;
    cfg.min_pts = 4;
    const PseudoLabeling out = dbscan(d, cfg);
    REQUIRE(out.num_clusters == 2);
    CHECK(out.labels[8] == out.labels[3]);  // core 3 beats core 4 by index
}

TEST_CASE("labeling matches the naive reference on random instances") {
    Rng rng(62);
    for (int trial = 0; trial < 25; ++trial) {
        const std::int64_t n = 10 + static_cast<std::int64_t>(rng.below(60));
        const Tensor<double> f = random_unit_rows<double>(rng, n, 3);
        const Tensor<double> d = pairwise_cosine_distance(f);
        const double eps = rng.uniform(0.05, 1.2);
        const std::int64_t min_pts = 1 + static_cast<std::int64_t>(rng.below(6));

        DbscanConfig cfg;
        cfg.eps = eps;
        cfg.min_pts = min_pts;
        const PseudoLabeling got = dbscan(d, cfg);
        const ReferenceLabeling want = reference_dbscan(d, eps, min_pts);
        CHECK(got.num_clusters == want.num_clusters);
        CHECK(got.labels == want.labels);
    }
}

TEST_CASE("partition is permutation-invariant up to relabeling") {
    Rng rng(63);
    const std::int64_t n = 40;
    const Tensor<double> f = random_unit_rows<double>(rng, n, 3);
    const Tensor<double> d = pairwise_cosine_distance(f);
    DbscanConfig cfg;
    cfg.eps = 0.35;
    cfg.min_pts = 3;
    const PseudoLabeling base = dbscan(d, cfg);

    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm.begin(), perm.end());

    Tensor<double> dp({n, n});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j)
            dp.at(i, j) = d.at(perm[static_cast<std::size_t>(i)],
                               perm[static_cast<std::size_t>(j)]);
    const PseudoLabeling permuted = dbscan(dp, cfg);
    CHECK(permuted.num_clusters == base.num_clusters);

    // Same co-membership structure: map permuted labels back and compare.
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            const bool together_base =
                base.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] ==
                    base.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])] &&
                base.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] !=
                    kOutlier;
            const bool together_perm =
                permuted.labels[static_cast<std::size_t>(i)] ==
                    permuted.labels[static_cast<std::size_t>(j)] &&
                permuted.labels[static_cast<std::size_t>(i)] != kOutlier;
            CHECK(together_base == together_perm);
        }
    }
}

TEST_CASE("malformed distance matrices are rejected") {
    DbscanConfig cfg;
    Tensor<double> bad_diag({2, 2});
    bad_diag.at(0, 0) = 0.1;
    CHECK_THROWS_AS((void)dbscan(bad_diag, cfg), ContractError);

    Tensor<double> asym({2, 2});
    asym.at(0, 1) = 0.2;
    asym.at(1, 0) = 0.7;
    CHECK_THROWS_AS((void)dbscan(asym, cfg), ContractError);

    Tensor<double> range({2, 2});
    range.at(0, 1) = 2.5;
    range.at(1, 0) = 2.5;
    CHECK_THROWS_AS((void)dbscan(range, cfg), ContractError);
}

TEST_CASE("config validation") {
    DbscanConfig cfg;
    cfg.eps = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.eps = 0.6;
    cfg.min_pts = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("labels replicate across the three spaces and outliers leave the pool") {
    PseudoLabeling labeling;
    labeling.labels = {0, 0, 1, kOutlier};
    labeling.num_clusters = 2;
    Rng rng(64);
    const Tensor<double> f = random_unit_rows<double>(rng, 4, 3);
    const Tensor<double> ft = random_unit_rows<double>(rng, 4, 3);
    const Tensor<double> fh = random_unit_rows<double>(rng, 4, 3);
    const LabeledView view = assign_pseudo_labels(labeling, f, ft, fh);
    CHECK(view.labels == labeling.labels);
    CHECK(view.num_clusters == 2);
    CHECK(view.pool == std::vector<std::int64_t>{0, 1, 2});
    CHECK(view.num_clusters == *std::max_element(view.labels.begin(), view.labels.end()) + 1);

    PseudoLabeling all_out;
    all_out.labels = {kOutlier, kOutlier};
    all_out.num_clusters = 0;
    const Tensor<double> f2 = random_unit_rows<double>(rng, 2, 3);
    const LabeledView empty = assign_pseudo_labels(all_out, f2, f2, f2);
    CHECK(empty.pool.empty());

    CHECK_THROWS_AS((void)assign_pseudo_labels(labeling, f, ft, random_unit_rows<double>(rng, 3, 3)),
                    ContractError);
}

TEST_CASE("purity: perfect, split, and tally-oracle agreement") {
    PseudoLabeling perfect;
    perfect.labels = {0, 0, 1, 1};
    perfect.num_clusters = 2;
    CHECK(cluster_purity(perfect, {0, 0, 1, 1}) == doctest::Approx(1.0));

    PseudoLabeling split;
    split.labels = {0, 0, 1, 1};
    split.num_clusters = 2;
    CHECK(cluster_purity(split, {0, 1, 0, 1}) == doctest::Approx(0.5));

    // Random labeling against an independent tally.
    Rng rng(65);
    PseudoLabeling random_lab;
    std::vector<std::int32_t> truth;
    for (int i = 0; i < 100; ++i) {
        const bool outlier = rng.bernoulli(0.2);
        random_lab.labels.push_back(outlier ? kOutlier
                                            : static_cast<std::int32_t>(rng.below(5)));
        truth.push_back(static_cast<std::int32_t>(rng.below(10)));
    }
    random_lab.num_clusters = 5;

    std::map<std::int32_t, std::map<std::int32_t, int>> tally;
    int kept = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (random_lab.labels[i] == kOutlier) continue;
        ++tally[random_lab.labels[i]][truth[i]];
        ++kept;
    }
    int agree = 0;
    for (auto& [cluster, classes] : tally) {
        int best = 0;
        for (auto& [cls, count] : classes) best = std::max(best, count);
        agree += best;
    }
    CHECK(cluster_purity(random_lab, truth) ==
          doctest::Approx(static_cast<double>(agree) / kept).epsilon(1e-12));

    PseudoLabeling none;
    none.labels = {kOutlier};
    none.num_clusters = 0;
    CHECK_THROWS_AS((void)cluster_purity(none, {0}), ContractError);
}

}  // TEST_SUITE
