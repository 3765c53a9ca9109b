// Scalar-output subgraphs for finite-difference verification, one per op
// kind plus the batched training objective. Linear ops are weighted by a
// fixed constant matrix so their gradients are not trivially all-ones.

#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fancl/grad_check.hpp"
#include "fancl/losses.hpp"
#include "fancl/ops.hpp"
#include "fancl/rng.hpp"
#include "fancl/tensor.hpp"

namespace fancl::testing {

struct GradCase {
    std::string name;
    SubgraphBuilder build;
    std::function<std::vector<Tensor<double>>(Rng&)> sample;
};

/// Deterministic non-uniform weights matching `dims`.
inline Tensor<double> fixed_weights(const Dims& dims) {
    Tensor<double> c(dims);
    for (std::int64_t i = 0; i < c.numel(); ++i)
        c[i] = 0.4 + 0.6 * std::sin(0.7 * static_cast<double>(i) + 0.3);
    return c;
}

/// sum(graph_output * fixed_weights) as the scalar head.
inline Var<double> weighted_sum(Var<double> y) {
    Var<double> c = ops::constant(*y.tape, fixed_weights(y.tape->value(y.id).dims()));
    return ops::sum(ops::mul(y, c));
}

inline Tensor<double> sample_smooth(Rng& rng, Dims dims, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(dims));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

/// Magnitudes in [0.1, 1.1] with random sign: comfortably away from relu
/// kinks and log/normalization singularities.
inline Tensor<double> sample_offzero(Rng& rng, Dims dims) {
    Tensor<double> t(std::move(dims));
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.1);
    return t;
}

inline std::vector<GradCase> standard_grad_cases() {
    std::vector<GradCase> cases;

    // Leaves are created one statement at a time throughout: the checker
    // pairs point tensors with tape leaves by creation order, and argument
    // evaluation order would leave that order unspecified.
    cases.push_back({"add",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         Var<double> a = ops::leaf(t, p[0], true);
                         Var<double> b = ops::leaf(t, p[1], true);
                         return weighted_sum(ops::add(a, b));
                     },
                     [](Rng& rng) {
                         return std::vector{sample_smooth(rng, {3, 4}),
                                            sample_smooth(rng, {3, 4})};
                     }});

    cases.push_back({"add broadcast",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         Var<double> a = ops::leaf(t, p[0], true);
                         Var<double> b = ops::leaf(t, p[1], true);
                         return weighted_sum(ops::add(a, b));
                     },
                     [](Rng& rng) {
                         return std::vector{sample_smooth(rng, {3, 4}), sample_smooth(rng, {4})};
                     }});

    cases.push_back({"mul",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         Var<double> a = ops::leaf(t, p[0], true);
                         Var<double> b = ops::leaf(t, p[1], true);
                         return ops::sum(ops::mul(a, b));
                     },
                     [](Rng& rng) {
                         return std::vector{sample_smooth(rng, {2, 5}),
                                            sample_smooth(rng, {2, 5})};
                     }});

    cases.push_back({"scale",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         return weighted_sum(ops::scale(ops::leaf(t, p[0], true), -1.7));
                     },
                     [](Rng& rng) { return std::vector{sample_smooth(rng, {4, 3})}; }});

    cases.push_back({"relu",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         return weighted_sum(ops::relu(ops::leaf(t, p[0], true)));
                     },
                     [](Rng& rng) { return std::vector{sample_offzero(rng, {3, 5})}; }});

    cases.push_back({"sigmoid",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         return weighted_sum(ops::sigmoid(ops::leaf(t, p[0], true)));
                     },
                     [](Rng& rng) { return std::vector{sample_smooth(rng, {3, 4}, -2.0, 2.0)}; }});

    cases.push_back({"exp",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         return weighted_sum(ops::exp(ops::leaf(t, p[0], true)));
                     },
                     [](Rng& rng) { return std::vector{sample_smooth(rng, {2, 4})}; }});

    cases.push_back({"log",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         return weighted_sum(ops::log(ops::leaf(t, p[0], true)));
                     },
                     [](Rng& rng) { return std::vector{sample_smooth(rng, {2, 4}, 0.5, 3.0)}; }});

    cases.push_back({"matmul",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         Var<double> a = ops::leaf(t, p[0], true);
                         Var<double> b = ops::leaf(t, p[1], true);
                         return weighted_sum(ops::matmul(a, b));
                     },
                     [](Rng& rng) {
                         return std::vector{sample_smooth(rng, {3, 4}),
                                            sample_smooth(rng, {4, 2})};
                     }});

    cases.push_back({"matmul vector rhs",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         Var<double> a = ops::leaf(t, p[0], true);
                         Var<double> b = ops::leaf(t, p[1], true);
                         return weighted_sum(ops::matmul(a, b));
                     },
                     [](Rng& rng) {
                         return std::vector{sample_smooth(rng, {3, 4}), sample_smooth(rng, {4})};
                     }});

    cases.push_back({"conv2d",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         Var<double> x = ops::leaf(t, p[0], true);
                         Var<double> w = ops::leaf(t, p[1], true);
                         Var<double> b = ops::leaf(t, p[2], true);
                         return weighted_sum(ops::conv2d(x, w, b, 2, 1));
                     },
                     [](Rng& rng) {
                         return std::vector{sample_smooth(rng, {2, 2, 5, 5}),
                                            sample_smooth(rng, {3, 2, 3, 3}),
                                            sample_smooth(rng, {3})};
                     }});

    auto bn_train = [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
        ops::BnStats<double> stats{Tensor<double>({p[1].dim(0)}),
                                   Tensor<double>::full({p[1].dim(0)}, 1.0)};
        Var<double> x = ops::leaf(t, p[0], true);
        Var<double> gamma = ops::leaf(t, p[1], true);
        Var<double> beta = ops::leaf(t, p[2], true);
        return weighted_sum(ops::batch_norm(x, gamma, beta, stats, true));
    };
    cases.push_back({"batchnorm train 2d", bn_train, [](Rng& rng) {
                         return std::vector{sample_smooth(rng, {6, 3}, -2.0, 2.0),
                                            sample_smooth(rng, {3}, 0.5, 1.5),
                                            sample_smooth(rng, {3})};
                     }});
    cases.push_back({"batchnorm train 4d", bn_train, [](Rng& rng) {
                         return std::vector{sample_smooth(rng, {2, 2, 3, 3}, -2.0, 2.0),
                                            sample_smooth(rng, {2}, 0.5, 1.5),
                                            sample_smooth(rng, {2})};
                     }});

    cases.push_back({"batchnorm eval",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         ops::BnStats<double> stats{Tensor<double>::full({p[1].dim(0)}, 0.2),
                                                    Tensor<double>::full({p[1].dim(0)}, 1.3)};
                         Var<double> x = ops::leaf(t, p[0], true);
                         Var<double> gamma = ops::leaf(t, p[1], true);
                         Var<double> beta = ops::leaf(t, p[2], true);
                         return weighted_sum(ops::batch_norm(x, gamma, beta, stats, false));
                     },
                     [](Rng& rng) {
                         return std::vector{sample_smooth(rng, {4, 3}, -2.0, 2.0),
                                            sample_smooth(rng, {3}, 0.5, 1.5),
                                            sample_smooth(rng, {3})};
                     }});

    cases.push_back({"global_avg_pool",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         return weighted_sum(ops::global_avg_pool(ops::leaf(t, p[0], true)));
                     },
                     [](Rng& rng) { return std::vector{sample_smooth(rng, {2, 3, 4, 4})}; }});

    cases.push_back({"l2_normalize",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         return weighted_sum(ops::l2_normalize(ops::leaf(t, p[0], true)));
                     },
                     [](Rng& rng) { return std::vector{sample_offzero(rng, {3, 6})}; }});

    cases.push_back({"concat rows",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         Var<double> a = ops::leaf(t, p[0], true);
                         Var<double> b = ops::leaf(t, p[1], true);
                         return weighted_sum(ops::concat<double>({a, b}, 0));
                     },
                     [](Rng& rng) {
                         return std::vector{sample_smooth(rng, {2, 3}),
                                            sample_smooth(rng, {4, 3})};
                     }});
    cases.push_back({"concat columns",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         Var<double> a = ops::leaf(t, p[0], true);
                         Var<double> b = ops::leaf(t, p[1], true);
                         return weighted_sum(ops::concat<double>({a, b}, 1));
                     },
                     [](Rng& rng) {
                         return std::vector{sample_smooth(rng, {3, 2}),
                                            sample_smooth(rng, {3, 4})};
                     }});

    cases.push_back({"sum",
                     [](Tape<double>& t, const std::vector<Tensor<double>>& p) {
                         return ops::sum(ops::leaf(t, p[0], true));
                     },
                     [](Rng& rng) { return std::vector{sample_smooth(rng, {3, 3})}; }});

    return cases;
}

/// Batched training objective over a 4-sample toy batch with fixed banks;
/// leaves are the three raw (pre-normalization) feature batches.
inline GradCase total_loss_grad_case() {
    const std::int64_t b = 4, d = 6;
    const std::int32_t m = 3;
    auto banks = std::make_shared<BankSet<double>>();
    auto labels = std::make_shared<std::vector<std::int32_t>>();

    GradCase c;
    c.name = "joint objective";
    c.sample = [=](Rng& rng) {
        auto unit_rows = [&rng](std::int64_t n, std::int64_t dd) {
            Tensor<double> t({n, dd});
            for (std::int64_t i = 0; i < n; ++i) {
                double sq = 0.0;
                for (std::int64_t k = 0; k < dd; ++k) {
                    t[i * dd + k] = rng.normal();
                    sq += t[i * dd + k] * t[i * dd + k];
                }
                const double norm = std::sqrt(sq);
                for (std::int64_t k = 0; k < dd; ++k) t[i * dd + k] /= norm;
            }
            return t;
        };
        banks->original.entries = unit_rows(m, d);
        banks->noised.entries = unit_rows(m, d);
        banks->fused.entries = unit_rows(m, d);
        labels->clear();
        for (std::int64_t i = 0; i < b; ++i)
            labels->push_back(static_cast<std::int32_t>(rng.below(m)));
        return std::vector{sample_offzero(rng, {b, d}), sample_offzero(rng, {b, d}),
                           sample_offzero(rng, {b, d})};
    };
    c.build = [=](Tape<double>& t, const std::vector<Tensor<double>>& p) {
        LossConfig cfg;
        Var<double> f = ops::leaf(t, p[0], true);
        Var<double> f_tilde = ops::leaf(t, p[1], true);
        Var<double> f_hat = ops::leaf(t, p[2], true);
        return total_loss(t, f, f_tilde, f_hat, *banks, *labels, cfg).total;
    };
    return c;
}

/// Runs grad_check at `points` sampled smooth points, resampling on kink
/// rejections, and returns the worst relative error seen.
inline double max_grad_error(const GradCase& c, Rng rng, int points) {
    double worst = 0.0;
    int accepted = 0;
    int guard = 0;
    while (accepted < points) {
        if (++guard > points * 50)
            throw std::runtime_error("grad case '" + c.name + "' keeps hitting kinks");
        const std::vector<Tensor<double>> point = c.sample(rng);
        try {
            worst = std::max(worst, grad_check(c.build, point));
            ++accepted;
        } catch (const KinkError&) {
            continue;
        }
    }
    return worst;
}

}  // namespace fancl::testing
