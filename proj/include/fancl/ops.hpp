#pragma once

#include <vector>

#include "fancl/kernels.hpp"
#include "fancl/tape.hpp"

// Thin Var-level wrappers so model code reads as expressions instead of
// raw tape.apply() calls. All of them live on one tape per forward pass.

namespace fancl::ops {

template <typename T>
Var<T> leaf(Tape<T>& tape, Tensor<T> value, bool requires_grad) {
    return {&tape, tape.leaf(std::move(value), requires_grad)};
}

/// Leaf that never receives gradient (inputs, memory banks, masks...).
template <typename T>
Var<T> constant(Tape<T>& tape, Tensor<T> value) {
    return {&tape, tape.leaf(std::move(value), false)};
}

namespace detail {
template <typename T>
Tape<T>& same_tape(const Var<T>& a, const Var<T>& b) {
    if (a.tape != b.tape) throw ContractError("operands belong to different tapes");
    return *a.tape;
}
}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    Tape<T>& t = detail::same_tape(a, b);
    return {&t, t.apply(OpKind::add, {a.id, b.id}, {})};
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    Tape<T>& t = detail::same_tape(a, b);
    return {&t, t.apply(OpKind::mul, {a.id, b.id}, {})};
}

template <typename T>
Var<T> scale(const Var<T>& x, double s) {
    OpAttrs attrs;
    attrs.scale = s;
    return {x.tape, x.tape->apply(OpKind::scale, {x.id}, attrs)};
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    return {x.tape, x.tape->apply(OpKind::relu, {x.id}, {})};
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    return {x.tape, x.tape->apply(OpKind::sigmoid, {x.id}, {})};
}

template <typename T>
Var<T> exp(const Var<T>& x) {
    return {x.tape, x.tape->apply(OpKind::exp, {x.id}, {})};
}

template <typename T>
Var<T> log(const Var<T>& x) {
    return {x.tape, x.tape->apply(OpKind::log, {x.id}, {})};
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    Tape<T>& t = detail::same_tape(a, b);
    return {&t, t.apply(OpKind::matmul, {a.id, b.id}, {})};
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::int64_t stride,
              std::int64_t pad) {
    Tape<T>& t = detail::same_tape(x, w);
    (void)detail::same_tape(w, b);
    OpAttrs attrs;
    attrs.stride = stride;
    attrs.pad = pad;
    return {&t, t.apply(OpKind::conv2d, {x.id, w.id, b.id}, attrs)};
}

/// Running statistics owned by the model, updated outside the tape so a
/// recorded forward pass stays replayable.
template <typename T>
struct BnStats {
    Tensor<T> mean;
    Tensor<T> var;
};

/// Batch normalization over (B,C) or (B,C,H,W).
/// Training mode normalizes with batch statistics and folds them into the
/// running estimates (biased variance, update rate `momentum`); eval mode
/// normalizes with the running estimates held as constants.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BnStats<T>& stats,
                  bool training, double eps = 1e-5, double momentum = 0.1) {
    Tape<T>& t = detail::same_tape(x, gamma);
    (void)detail::same_tape(gamma, beta);
    OpAttrs attrs;
    attrs.eps = eps;
    attrs.training = training;
    if (training) {
        Tensor<T> bmean, bvar;
        kern::batchnorm_stats(x.value(), bmean, bvar);
        NodeId out = t.apply(OpKind::batchnorm, {x.id, gamma.id, beta.id}, attrs);
        const T m = static_cast<T>(momentum);
        for (std::int64_t i = 0; i < bmean.numel(); ++i) {
            stats.mean[i] = (T(1) - m) * stats.mean[i] + m * bmean[i];
            stats.var[i] = (T(1) - m) * stats.var[i] + m * bvar[i];
        }
        return {&t, out};
    }
    Var<T> rm = constant(t, stats.mean);
    Var<T> rv = constant(t, stats.var);
    return {&t, t.apply(OpKind::batchnorm, {x.id, gamma.id, beta.id, rm.id, rv.id}, attrs)};
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    return {x.tape, x.tape->apply(OpKind::global_avg_pool, {x.id}, {})};
}

template <typename T>
Var<T> l2_normalize(const Var<T>& x, double eps = 1e-12) {
    OpAttrs attrs;
    attrs.eps = eps;
    return {x.tape, x.tape->apply(OpKind::l2_normalize, {x.id}, attrs)};
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::int64_t axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    Tape<T>& t = *parts.front().tape;
    std::vector<NodeId> ids;
    ids.reserve(parts.size());
    for (const Var<T>& p : parts) {
        (void)detail::same_tape(parts.front(), p);
        ids.push_back(p.id);
    }
    OpAttrs attrs;
    attrs.axis = axis;
    return {&t, t.apply(OpKind::concat, ids, attrs)};
}

template <typename T>
Var<T> sum(const Var<T>& x) {
    return {x.tape, x.tape->apply(OpKind::sum, {x.id}, {})};
}

}  // namespace fancl::ops
