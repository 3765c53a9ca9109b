#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fancl/augment.hpp"
#include "fancl/checkpoint.hpp"
#include "fancl/clustering.hpp"
#include "fancl/dataset.hpp"
#include "fancl/fana.hpp"
#include "fancl/losses.hpp"

// Training orchestration. Each epoch regenerates the noised images with the
// frozen probe, extracts eval-mode features for all three spaces, clusters
// the original space, initializes the banks, then runs one pass of PK-
// sampled mini-batches: shared-geometry augmentation of each (x, noised x)
// pair, joint loss, one optimizer step, then bank momentum updates in batch
// order. All randomness derives from (seed, purpose, epoch, iteration), so
// resuming from a checkpoint continues the exact uninterrupted trajectory.

namespace fancl {

struct TrainConfig {
    std::int64_t epochs = 60;
    double base_lr = 0.00035;
    double lr_decay = 0.1;
    std::int64_t lr_step_epochs = 20;
    std::int64_t batch = 64;
    std::int64_t p = 16;  // identities per batch
    std::int64_t k = 4;   // instances per identity
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainSetup {
    EncoderConfig encoder;
    TrainConfig train;
    AugmentConfig augment;
    FanaConfig fana;
    DbscanConfig dbscan;
    LossConfig loss;
    MemoryConfig memory;
    AdamConfig adam;
};

double lr_at(std::int64_t epoch, const TrainConfig& cfg);

/// P distinct clusters drawn uniformly, then K members each (without
/// replacement when the cluster is large enough, with replacement
/// otherwise). Fewer than P clusters lowers P to M with a warning on
/// stderr. Returns sample indices into the labeled batch.
std::vector<std::int64_t> pk_sample(const LabeledView& view, std::int64_t p, std::int64_t k,
                                    Rng& rng);

struct ClusteringPhase {
    std::vector<Tensor<float>> noised;         // per train image, FANA output
    Tensor<float> f, f_tilde, f_hat;           // (N, D) eval-mode features
    PseudoLabeling labeling;
    LabeledView view;
    BankSet<float> banks;                      // valid when view.num_clusters >= 1
    double purity = 0.0;                       // diagnostic vs true identities
};

/// Algorithm steps up to bank initialization; leaves `state` params intact
/// (eval-mode extraction only).
ClusteringPhase clustering_phase(const DatasetSplit& train, const TrainState& state,
                                 const TrainSetup& setup);

struct IterationLosses {
    double total = 0.0;
    double cluster_all = 0.0;
    double consistency = 0.0;
};

/// One optimizer step over `batch_indices` (train-split indices, all
/// non-outlier). Updates parameters, running statistics and the banks in
/// `state`.
IterationLosses train_iteration(const std::vector<std::int64_t>& batch_indices,
                                TrainState& state, const TrainSetup& setup,
                                const ClusteringPhase& phase, const DatasetSplit& train,
                                double lr, Rng& rng);

struct TrainResult {
    std::string checkpoint_path;  // final checkpoint
    std::string metrics_path;     // JSON-lines loss stream
    TrainState state;
};

/// Full run. Writes per-epoch checkpoints plus `checkpoint.ftnc` and
/// `metrics.jsonl` under `out_dir`. A non-empty `resume_from` loads that
/// checkpoint and continues where it stopped.
TrainResult run_training(const Dataset& dataset, const TrainSetup& setup,
                         const std::string& out_dir, const std::string& resume_from = "");

}  // namespace fancl
