#include "fancl/memory_bank.hpp"

#include <cmath>

#include "fancl/errors.hpp"

namespace fancl {

void MemoryConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("memory: alpha must be in [0, 1]");
}

namespace {

template <typename T>
void renormalize_row(T* row, std::int64_t d, double l2_eps) {
    double sq = 0.0;
    for (std::int64_t k = 0; k < d; ++k) sq += double(row[k]) * double(row[k]);
    const double norm = std::sqrt(sq);
    if (norm < l2_eps) throw NumericError("memory bank entry degenerated to zero");
    for (std::int64_t k = 0; k < d; ++k) row[k] = static_cast<T>(double(row[k]) / norm);
}

template <typename T>
MemoryBank<T> bank_from(const Tensor<T>& features, const std::vector<std::int32_t>& labels,
                        std::int32_t num_clusters, double l2_eps) {
    const std::int64_t n = features.dim(0), d = features.dim(1);
    MemoryBank<T> bank;
    bank.entries = Tensor<T>({num_clusters, d});
    std::vector<std::int64_t> count(num_clusters, 0);
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int32_t c = labels[i];
        if (c < 0) continue;
        if (c >= num_clusters)
            throw ContractError("bank init: label " + std::to_string(c) + " outside " +
                                std::to_string(num_clusters) + " clusters");
        T* row = &bank.entries[std::int64_t(c) * d];
        const T* f = &features[i * d];
        for (std::int64_t k = 0; k < d; ++k) row[k] += f[k];
        ++count[c];
    }
    for (std::int32_t c = 0; c < num_clusters; ++c) {
        if (count[c] == 0)
            throw ContractError("bank init: cluster " + std::to_string(c) + " has no members");
        T* row = &bank.entries[std::int64_t(c) * d];
        for (std::int64_t k = 0; k < d; ++k) row[k] /= static_cast<T>(count[c]);
        renormalize_row(row, d, l2_eps);
    }
    return bank;
}

}  // namespace

template <typename T>
BankSet<T> init_banks(const Tensor<T>& original, const Tensor<T>& noised, const Tensor<T>& fused,
                      const std::vector<std::int32_t>& labels, std::int32_t num_clusters,
                      double l2_eps) {
    if (num_clusters < 1) throw ContractError("bank init: need at least one cluster");
    for (const Tensor<T>* space : {&original, &noised, &fused})
        if (space->rank() != 2 || space->dim(0) != static_cast<std::int64_t>(labels.size()))
            throw ShapeError("bank init: feature batch dims " + dims_to_string(space->dims()) +
                             " do not match " + std::to_string(labels.size()) + " labels");
    BankSet<T> banks;
    banks.original = bank_from(original, labels, num_clusters, l2_eps);
    banks.noised = bank_from(noised, labels, num_clusters, l2_eps);
    banks.fused = bank_from(fused, labels, num_clusters, l2_eps);
    return banks;
}

template <typename T>
void momentum_update(MemoryBank<T>& bank, std::int32_t label, const Tensor<T>& f_q, double alpha,
                     double l2_eps) {
    if (label < 0)
        throw ContractError("momentum update: outlier label cannot reach the bank");
    if (label >= bank.size())
        throw ContractError("momentum update: label " + std::to_string(label) + " outside bank of " +
                            std::to_string(bank.size()) + " entries");
    if (f_q.rank() != 1 || f_q.dim(0) != bank.dim())
        throw ShapeError("momentum update: query dims " + dims_to_string(f_q.dims()) +
                         " do not match bank dim " + std::to_string(bank.dim()));
    if (alpha == 1.0) return;  // blend keeps the entry bit-identical
    const std::int64_t d = bank.dim();
    T* row = &bank.entries[std::int64_t(label) * d];
    if (alpha == 0.0) {  // blend equals f_q bit-exactly; renorm would perturb it
        for (std::int64_t k = 0; k < d; ++k) row[k] = f_q[k];
        return;
    }
    const T a = static_cast<T>(alpha);
    for (std::int64_t k = 0; k < d; ++k) row[k] = a * row[k] + (T(1) - a) * f_q[k];
    renormalize_row(row, d, l2_eps);
}

template <typename T>
Tensor<T> positive_lookup(const MemoryBank<T>& bank, std::int32_t label) {
    if (label < 0 || label >= bank.size())
        throw ContractError("positive lookup: label " + std::to_string(label) +
                            " outside bank of " + std::to_string(bank.size()) + " entries");
    const std::int64_t d = bank.dim();
    Tensor<T> out({d});
    const T* row = &bank.entries[std::int64_t(label) * d];
    for (std::int64_t k = 0; k < d; ++k) out[k] = row[k];
    return out;
}

#define FANCL_INSTANTIATE_BANK(T)                                                              \
    template BankSet<T> init_banks<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                      const std::vector<std::int32_t>&, std::int32_t, double); \
    template void momentum_update<T>(MemoryBank<T>&, std::int32_t, const Tensor<T>&, double,  \
                                     double);                                                  \
    template Tensor<T> positive_lookup<T>(const MemoryBank<T>&, std::int32_t);

FANCL_INSTANTIATE_BANK(float)
FANCL_INSTANTIATE_BANK(double)
#undef FANCL_INSTANTIATE_BANK

}  // namespace fancl
