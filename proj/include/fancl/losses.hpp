#pragma once

#include <cstdint>
#include <vector>

#include "fancl/memory_bank.hpp"
#include "fancl/ops.hpp"

// Contrastive objectives, built from tape primitives so one backward pass
// covers everything. Per query and space: softmax over similarities to all
// bank entries at temperature tau, with the entry sharing the query's pseudo
// label as the positive. The consistency term pulls the original-space query
// toward its noised-space positive entry (cluster term) and toward its own
// noised twin (instance term). Banks enter every graph as constants.

namespace fancl {

struct LossConfig {
    double tau = 0.05;
    bool consistency_cluster = true;
    bool consistency_instance = true;
    double l2_eps = 1e-12;

    void validate() const;
};

/// Differentiable cosine similarity of two rank-1 vectors: u.v / (|u||v|).
/// Zero vectors are a numeric error rather than a silent clamp.
template <typename T>
Var<T> cosine_sim(Var<T> u, Var<T> v, double l2_eps = 1e-12);

/// -log softmax(sim(f_q, .) / tau) at the positive entry, for one rank-1
/// query. Stabilized by subtracting the detached row max; a single-entry
/// bank yields exactly zero.
template <typename T>
Var<T> cluster_loss(Var<T> f_q, const MemoryBank<T>& bank, std::int32_t label, double tau,
                    double l2_eps = 1e-12);

/// -[cluster] sim(f_q, m_plus) - [instance] sim(f_q, f_tilde_q), with each
/// term subject to its config toggle. Both toggles off yields constant 0.
template <typename T>
Var<T> consistency_loss(Var<T> f_q, Var<T> f_tilde_q, const Tensor<T>& m_plus,
                        const LossConfig& cfg);

/// Batched objective. `f`, `f_tilde`, `f_hat` are (B, D); every label must
/// be a valid non-outlier cluster id. Components are batch means:
///   cluster_all  = mean_i sum over the three spaces of the cluster loss
///   consistency  = mean_i consistency term
///   total        = mean_i (cluster_all_i + consistency_i)
template <typename T>
struct TotalLossParts {
    Var<T> total;
    Var<T> cluster_all;
    Var<T> consistency;
};

template <typename T>
TotalLossParts<T> total_loss(Tape<T>& tape, Var<T> f, Var<T> f_tilde, Var<T> f_hat,
                             const BankSet<T>& banks, const std::vector<std::int32_t>& labels,
                             const LossConfig& cfg);

}  // namespace fancl
