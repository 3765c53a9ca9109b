#include "fancl/losses.hpp"

#include <algorithm>
#include <cmath>

#include "fancl/errors.hpp"

namespace fancl {

void LossConfig::validate() const {
    if (!(tau > 0.0)) throw ConfigError("loss: temperature must be > 0");
}

namespace {

template <typename T>
void require_nonzero(const Tensor<T>& v, const char* who) {
    double sq = 0.0;
    for (std::int64_t i = 0; i < v.numel(); ++i) sq += double(v[i]) * double(v[i]);
    if (sq == 0.0) throw NumericError(std::string(who) + ": zero vector has no direction");
}

template <typename T>
Tensor<T> ones(std::int64_t n) {
    return Tensor<T>::full({n}, T(1));
}

template <typename T>
void check_bank_against(const MemoryBank<T>& bank, std::int64_t dim, const char* space) {
    if (bank.size() < 1)
        throw ContractError(std::string("loss: ") + space + " bank is empty");
    if (bank.dim() != dim)
        throw ShapeError(std::string("loss: ") + space + " bank dim " +
                         std::to_string(bank.dim()) + " does not match feature dim " +
                         std::to_string(dim));
}

/// Per-query loss rows (B) for one space. `queries_n` must already be
/// normalized; the bank enters as a constant.
template <typename T>
Var<T> cluster_loss_rows(Tape<T>& tape, Var<T> queries_n, const MemoryBank<T>& bank,
                         const std::vector<std::int32_t>& labels, double tau) {
    const std::int64_t b = queries_n.value().dim(0);
    const std::int64_t d = queries_n.value().dim(1);
    const std::int64_t m = bank.size();

    Tensor<T> bank_t({d, m});
    for (std::int64_t j = 0; j < m; ++j)
        for (std::int64_t k = 0; k < d; ++k) bank_t.at(k, j) = bank.entries.at(j, k);

    Var<T> sims = ops::scale(ops::matmul(queries_n, ops::constant(tape, std::move(bank_t))),
                             1.0 / tau);  // (B, M)

    Tensor<T> neg_rowmax({b, m});
    Tensor<T> onehot({b, m});
    const Tensor<T>& sv = sims.value();
    for (std::int64_t i = 0; i < b; ++i) {
        T mx = sv.at(i, 0);
        for (std::int64_t j = 1; j < m; ++j) mx = std::max(mx, sv.at(i, j));
        for (std::int64_t j = 0; j < m; ++j) neg_rowmax.at(i, j) = -mx;
        onehot.at(i, labels[i]) = T(1);
    }

    Var<T> shifted = ops::add(sims, ops::constant(tape, std::move(neg_rowmax)));
    Var<T> col = ops::constant(tape, ones<T>(m));
    Var<T> log_z = ops::log(ops::matmul(ops::exp(shifted), col));                     // (B)
    Var<T> pos = ops::matmul(ops::mul(shifted, ops::constant(tape, std::move(onehot))), col);
    return ops::add(log_z, ops::scale(pos, -1.0));
}

}  // namespace

template <typename T>
Var<T> cosine_sim(Var<T> u, Var<T> v, double l2_eps) {
    if (u.value().rank() != 1 || v.value().rank() != 1 ||
        u.value().dim(0) != v.value().dim(0))
        throw ShapeError("cosine similarity expects two equal-length vectors, got " +
                         dims_to_string(u.value().dims()) + " and " +
                         dims_to_string(v.value().dims()));
    require_nonzero(u.value(), "cosine similarity");
    require_nonzero(v.value(), "cosine similarity");
    return ops::sum(ops::mul(ops::l2_normalize(u, l2_eps), ops::l2_normalize(v, l2_eps)));
}

template <typename T>
Var<T> cluster_loss(Var<T> f_q, const MemoryBank<T>& bank, std::int32_t label, double tau,
                    double l2_eps) {
    if (!(tau > 0.0)) throw ConfigError("loss: temperature must be > 0");
    if (f_q.value().rank() != 1)
        throw ShapeError("cluster loss expects a rank-1 query, got " +
                         dims_to_string(f_q.value().dims()));
    check_bank_against(bank, f_q.value().dim(0), "query");
    if (label < 0 || label >= bank.size())
        throw ContractError("cluster loss: label " + std::to_string(label) + " outside bank of " +
                            std::to_string(bank.size()) + " entries");
    require_nonzero(f_q.value(), "cluster loss");
    Tape<T>& tape = *f_q.tape;
    const std::int64_t m = bank.size();

    Var<T> qn = ops::l2_normalize(f_q, l2_eps);
    Var<T> sims = ops::scale(ops::matmul(ops::constant(tape, bank.entries), qn), 1.0 / tau);

    const Tensor<T>& sv = sims.value();
    T mx = sv[0];
    for (std::int64_t j = 1; j < m; ++j) mx = std::max(mx, sv[j]);
    Var<T> shifted = ops::add(sims, ops::constant(tape, Tensor<T>::full({m}, -mx)));
    Var<T> log_z = ops::log(ops::sum(ops::exp(shifted)));
    Tensor<T> onehot({m});
    onehot[label] = T(1);
    Var<T> pos = ops::sum(ops::mul(shifted, ops::constant(tape, std::move(onehot))));
    return ops::add(log_z, ops::scale(pos, -1.0));
}

template <typename T>
Var<T> consistency_loss(Var<T> f_q, Var<T> f_tilde_q, const Tensor<T>& m_plus,
                        const LossConfig& cfg) {
    cfg.validate();
    Tape<T>& tape = *f_q.tape;
    if (!cfg.consistency_cluster && !cfg.consistency_instance)
        return ops::constant(tape, Tensor<T>::scalar(T(0)));
    Var<T> acc{nullptr, -1};
    bool first = true;
    if (cfg.consistency_cluster) {
        acc = cosine_sim(f_q, ops::constant(tape, m_plus), cfg.l2_eps);
        first = false;
    }
    if (cfg.consistency_instance) {
        Var<T> inst = cosine_sim(f_q, f_tilde_q, cfg.l2_eps);
        acc = first ? inst : ops::add(acc, inst);
    }
    return ops::scale(acc, -1.0);
}

template <typename T>
TotalLossParts<T> total_loss(Tape<T>& tape, Var<T> f, Var<T> f_tilde, Var<T> f_hat,
                             const BankSet<T>& banks, const std::vector<std::int32_t>& labels,
                             const LossConfig& cfg) {
    cfg.validate();
    const Tensor<T>& fv = f.value();
    if (fv.rank() != 2) throw ShapeError("total loss expects (B, D) features");
    const std::int64_t b = fv.dim(0), d = fv.dim(1);
    if (b < 1) throw ContractError("total loss: empty batch");
    if (!f_tilde.value().same_dims(fv) || !f_hat.value().same_dims(fv))
        throw ShapeError("total loss: the three feature batches must share dims");
    if (static_cast<std::int64_t>(labels.size()) != b)
        throw ContractError("total loss: " + std::to_string(labels.size()) + " labels for batch " +
                            std::to_string(b));
    check_bank_against(banks.original, d, "original");
    check_bank_against(banks.noised, d, "noised");
    check_bank_against(banks.fused, d, "fused");
    const std::int64_t m = banks.original.size();
    if (banks.noised.size() != m || banks.fused.size() != m)
        throw ContractError("total loss: banks disagree on cluster count");
    for (std::int64_t i = 0; i < b; ++i)
        if (labels[i] < 0 || labels[i] >= m)
            throw ContractError("total loss: sample " + std::to_string(i) + " has label " +
                                std::to_string(labels[i]) + ", expected [0, " + std::to_string(m) +
                                ")");

    Var<T> fn = ops::l2_normalize(f, cfg.l2_eps);
    Var<T> ftn = ops::l2_normalize(f_tilde, cfg.l2_eps);
    Var<T> fhn = ops::l2_normalize(f_hat, cfg.l2_eps);

    Var<T> cluster_vec = ops::add(
        ops::add(cluster_loss_rows(tape, fn, banks.original, labels, cfg.tau),
                 cluster_loss_rows(tape, ftn, banks.noised, labels, cfg.tau)),
        cluster_loss_rows(tape, fhn, banks.fused, labels, cfg.tau));

    Var<T> cons_vec{nullptr, -1};
    if (cfg.consistency_cluster || cfg.consistency_instance) {
        Var<T> col = ops::constant(tape, ones<T>(d));
        Var<T> acc{nullptr, -1};
        bool first = true;
        if (cfg.consistency_cluster) {
            Tensor<T> m_plus({b, d});
            for (std::int64_t i = 0; i < b; ++i)
                for (std::int64_t k = 0; k < d; ++k)
                    m_plus.at(i, k) = banks.noised.entries.at(labels[i], k);
            acc = ops::matmul(ops::mul(fn, ops::constant(tape, std::move(m_plus))), col);
            first = false;
        }
        if (cfg.consistency_instance) {
            Var<T> inst = ops::matmul(ops::mul(fn, ftn), col);
            acc = first ? inst : ops::add(acc, inst);
        }
        cons_vec = ops::scale(acc, -1.0);
    } else {
        cons_vec = ops::constant(tape, Tensor<T>({b}));
    }

    const double inv_b = 1.0 / static_cast<double>(b);
    TotalLossParts<T> parts;
    parts.cluster_all = ops::scale(ops::sum(cluster_vec), inv_b);
    parts.consistency = ops::scale(ops::sum(cons_vec), inv_b);
    parts.total = ops::scale(ops::sum(ops::add(cluster_vec, cons_vec)), inv_b);
    return parts;
}

#define FANCL_INSTANTIATE_LOSSES(T)                                                        \
    template Var<T> cosine_sim<T>(Var<T>, Var<T>, double);                                 \
    template Var<T> cluster_loss<T>(Var<T>, const MemoryBank<T>&, std::int32_t, double,   \
                                    double);                                               \
    template Var<T> consistency_loss<T>(Var<T>, Var<T>, const Tensor<T>&,                 \
                                        const LossConfig&);                                \
    template TotalLossParts<T> total_loss<T>(Tape<T>&, Var<T>, Var<T>, Var<T>,            \
                                             const BankSet<T>&,                            \
                                             const std::vector<std::int32_t>&,             \
                                             const LossConfig&);

FANCL_INSTANTIATE_LOSSES(float)
FANCL_INSTANTIATE_LOSSES(double)
#undef FANCL_INSTANTIATE_LOSSES

}  // namespace fancl
