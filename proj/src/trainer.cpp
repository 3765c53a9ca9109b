#include "fancl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fancl/errors.hpp"
#include "fancl/kernels.hpp"
#include "json.hpp"

namespace fancl {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (!(base_lr >= 0.0)) throw ConfigError("train: base lr must be >= 0");
    if (!(lr_decay > 0.0)) throw ConfigError("train: lr decay must be > 0");
    if (lr_step_epochs < 1) throw ConfigError("train: lr step must be >= 1 epoch");
    if (p < 1 || k < 1) throw ConfigError("train: P and K must be >= 1");
    if (p * k != batch)
        throw ConfigError("train: P*K (" + std::to_string(p * k) + ") must equal batch size (" +
                          std::to_string(batch) + ")");
}

double lr_at(std::int64_t epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw ContractError("lr_at: negative epoch");
    return cfg.base_lr * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_step_epochs));
}

std::vector<std::int64_t> pk_sample(const LabeledView& view, std::int64_t p, std::int64_t k,
                                    Rng& rng) {
    if (p < 1 || k < 1) throw ContractError("pk_sample: P and K must be >= 1");
    const std::int64_t m = view.num_clusters;
    if (m < 1) throw ContractError("pk_sample: no clusters to sample from");
    std::vector<std::vector<std::int64_t>> members(m);
    for (std::size_t i = 0; i < view.labels.size(); ++i)
        if (view.labels[i] != kOutlier)
            members[view.labels[i]].push_back(static_cast<std::int64_t>(i));

    std::int64_t take = p;
    if (m < p) {
        std::fprintf(stderr, "[train] only %lld clusters available, lowering P from %lld\n",
                     static_cast<long long>(m), static_cast<long long>(p));
        take = m;
    }
    std::vector<std::int64_t> cluster_ids(m);
    std::iota(cluster_ids.begin(), cluster_ids.end(), 0);
    for (std::int64_t i = 0; i < take; ++i) {
        const auto j = i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(m - i)));
        std::swap(cluster_ids[i], cluster_ids[j]);
    }

    std::vector<std::int64_t> batch;
    batch.reserve(take * k);
    for (std::int64_t c = 0; c < take; ++c) {
        const std::vector<std::int64_t>& pool = members[cluster_ids[c]];
        const auto size = static_cast<std::int64_t>(pool.size());
        if (size >= k) {
            std::vector<std::int64_t> copy = pool;
            for (std::int64_t i = 0; i < k; ++i) {
                const auto j =
                    i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(size - i)));
                std::swap(copy[i], copy[j]);
                batch.push_back(copy[i]);
            }
        } else {
            for (std::int64_t i = 0; i < k; ++i)
                batch.push_back(pool[rng.below(static_cast<std::uint64_t>(size))]);
        }
    }
    return batch;
}

namespace {

/// Eval-mode branch features over a whole split, in fixed-size chunks.
Tensor<float> extract_features(const EncoderConfig& enc, const BranchParams<float>& params,
                               const std::vector<Tensor<float>>& images) {
    const auto n = static_cast<std::int64_t>(images.size());
    Tensor<float> out({n, enc.dim});
    const std::int64_t chunk = 128;
    for (std::int64_t start = 0; start < n; start += chunk) {
        const std::int64_t stop = std::min(n, start + chunk);
        std::vector<Tensor<float>> slice(images.begin() + start, images.begin() + stop);
        Tensor<float> feats = forward_branch(enc, params, kern::stack_batch(slice));
        for (std::int64_t i = 0; i < stop - start; ++i)
            for (std::int64_t d = 0; d < enc.dim; ++d)
                out.at(start + i, d) = feats.at(i, d);
    }
    return out;
}

Tensor<float> row_of(const Tensor<float>& batch, std::int64_t row) {
    const std::int64_t d = batch.dim(1);
    Tensor<float> out({d});
    for (std::int64_t k = 0; k < d; ++k) out[k] = batch.at(row, k);
    return out;
}

std::vector<NodeId> branch_var_ids(const BranchVars<float>& v) {
    std::vector<NodeId> ids;
    for (const auto& s : v.stages) {
        ids.push_back(s.conv_w.id);
        ids.push_back(s.conv_b.id);
        ids.push_back(s.bn_g.id);
        ids.push_back(s.bn_b.id);
    }
    ids.push_back(v.proj_w.id);
    ids.push_back(v.bn_g.id);
    ids.push_back(v.bn_b.id);
    return ids;
}

void write_epoch_checkpoint(const std::string& out_dir, const TrainState& state) {
    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint_epoch%03lld.ftnc",
                  static_cast<long long>(state.epochs_done));
    save_checkpoint((fs::path(out_dir) / name).string(), state);
}

}  // namespace

ClusteringPhase clustering_phase(const DatasetSplit& train, const TrainState& state,
                                 const TrainSetup& setup) {
    if (train.size() == 0) throw ContractError("clustering phase: empty training split");
    setup.fana.validate();
    setup.dbscan.validate();

    ClusteringPhase phase;
    phase.noised.reserve(train.images.size());
    for (const Tensor<float>& img : train.images)
        phase.noised.push_back(fana(state.probe, setup.fana, img));

    phase.f = extract_features(setup.encoder, state.theta, train.images);
    phase.f_tilde = extract_features(setup.encoder, state.theta_prime, phase.noised);
    phase.f_hat = forward_fusion(setup.encoder, state.fusion, phase.f, phase.f_tilde);

    const Tensor<float> dist = pairwise_cosine_distance(phase.f);
    phase.labeling = dbscan(dist, setup.dbscan);
    phase.view = assign_pseudo_labels(phase.labeling, phase.f, phase.f_tilde, phase.f_hat);
    if (phase.view.num_clusters >= 1) {
        phase.banks = init_banks(phase.f, phase.f_tilde, phase.f_hat, phase.view.labels,
                                 phase.view.num_clusters, setup.loss.l2_eps);
        if (!train.ids.empty()) phase.purity = cluster_purity(phase.labeling, train.ids);
    }
    return phase;
}

IterationLosses train_iteration(const std::vector<std::int64_t>& batch_indices,
                                TrainState& state, const TrainSetup& setup,
                                const ClusteringPhase& phase, const DatasetSplit& train,
                                double lr, Rng& rng) {
    if (batch_indices.empty()) throw ContractError("train iteration: empty batch");
    const auto b = static_cast<std::int64_t>(batch_indices.size());

    std::vector<Tensor<float>> xs, xts;
    std::vector<std::int32_t> labels;
    xs.reserve(b);
    xts.reserve(b);
    labels.reserve(b);
    for (std::int64_t idx : batch_indices) {
        if (idx < 0 || idx >= train.size())
            throw ContractError("train iteration: sample index " + std::to_string(idx) +
                                " outside the split");
        const std::int32_t label = phase.view.labels[idx];
        if (label == kOutlier)
            throw ContractError("train iteration: sample " + std::to_string(idx) +
                                " is an outlier");
        const AugmentDraw draw = draw_augment(rng, setup.augment);
        xs.push_back(apply_augment(train.images[idx], draw, setup.augment));
        xts.push_back(apply_augment(phase.noised[idx], draw, setup.augment));
        labels.push_back(label);
    }

    Tape<float> tape;
    BranchVars<float> vt = lift(tape, state.theta, true);
    BranchVars<float> vtp = lift(tape, state.theta_prime, true);
    FusionVars<float> vf = lift(tape, state.fusion, true);
    Var<float> x = ops::constant(tape, kern::stack_batch(xs));
    Var<float> xt = ops::constant(tape, kern::stack_batch(xts));
    Var<float> f = branch_graph(tape, setup.encoder, state.theta, vt, x, true);
    Var<float> ft = branch_graph(tape, setup.encoder, state.theta_prime, vtp, xt, true);
    Var<float> fh = fusion_graph(setup.encoder, vf, f, ft);
    TotalLossParts<float> parts =
        total_loss(tape, f, ft, fh, state.banks, labels, setup.loss);

    IterationLosses losses;
    losses.total = parts.total.value()[0];
    losses.cluster_all = parts.cluster_all.value()[0];
    losses.consistency = parts.consistency.value()[0];
    if (!std::isfinite(losses.total))
        throw NumericError(std::string("train iteration: non-finite loss (cluster-all = ") +
                           std::to_string(losses.cluster_all) + ", consistency = " +
                           std::to_string(losses.consistency) + ")");

    GradMap<float> grads = tape.backward(parts.total.id);

    std::vector<ParamGrad<float>> updates;
    auto collect = [&](std::vector<std::pair<std::string, Tensor<float>*>> named,
                       const std::vector<NodeId>& ids) {
        if (named.size() != ids.size())
            throw ContractError("train iteration: parameter list desynchronized");
        for (std::size_t i = 0; i < named.size(); ++i)
            updates.push_back({named[i].first, named[i].second, &grads.at(ids[i])});
    };
    collect(named_params(state.theta, "theta"), branch_var_ids(vt));
    collect(named_params(state.theta_prime, "theta_prime"), branch_var_ids(vtp));
    collect(named_params(state.fusion, "fusion"), {vf.w.id, vf.b.id});
    state.adam.step(updates, lr);

    for (std::int64_t i = 0; i < b; ++i) {
        momentum_update(state.banks.original, labels[i], row_of(f.value(), i),
                        setup.memory.alpha, setup.loss.l2_eps);
        momentum_update(state.banks.noised, labels[i], row_of(ft.value(), i),
                        setup.memory.alpha, setup.loss.l2_eps);
        momentum_update(state.banks.fused, labels[i], row_of(fh.value(), i),
                        setup.memory.alpha, setup.loss.l2_eps);
    }
    return losses;
}

TrainResult run_training(const Dataset& dataset, const TrainSetup& setup,
                         const std::string& out_dir, const std::string& resume_from) {
    setup.encoder.validate();
    setup.train.validate();
    setup.augment.validate();
    setup.fana.validate();
    setup.dbscan.validate();
    setup.loss.validate();
    setup.memory.validate();
    if (dataset.train.size() == 0) throw ContractError("training: dataset has no train split");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir + "': " + ec.message());

    TrainResult result;
    TrainState& state = result.state;
    const bool resuming = !resume_from.empty();
    if (resuming) {
        state = load_checkpoint(resume_from);
    } else {
        state.encoder = setup.encoder;
        state.seed = setup.train.seed;
        init_params(setup.encoder, state.seed, state.theta, state.theta_prime, state.fusion);
        state.adam = Adam<float>(setup.adam);
        state.probe = make_probe<float>(setup.fana.source, setup.encoder, state.theta,
                                        state.seed);
    }

    result.metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
    std::ofstream metrics(result.metrics_path,
                          resuming ? std::ios::app : std::ios::trunc);
    if (!metrics) throw IoError("cannot open '" + result.metrics_path + "' for writing");

    for (std::int64_t epoch = state.epochs_done; epoch < setup.train.epochs; ++epoch) {
        const double lr = lr_at(epoch, setup.train);
        if (setup.fana.source != ProbeSource::dedicated)
            state.probe = make_probe<float>(setup.fana.source, setup.encoder, state.theta,
                                            state.seed);
        ClusteringPhase phase = clustering_phase(dataset.train, state, setup);
        std::fprintf(stderr,
                     "[train] epoch %lld: %lld clusters, %zu/%lld samples in pool, purity %.3f\n",
                     static_cast<long long>(epoch),
                     static_cast<long long>(phase.view.num_clusters), phase.view.pool.size(),
                     static_cast<long long>(dataset.train.size()), phase.purity);
        if (phase.view.num_clusters < 1 || phase.view.pool.empty()) {
            std::fprintf(stderr, "[train] epoch %lld skipped: no clusters\n",
                         static_cast<long long>(epoch));
            state.epochs_done = epoch + 1;
            write_epoch_checkpoint(out_dir, state);
            continue;
        }
        state.banks = phase.banks;

        const auto pool = static_cast<std::int64_t>(phase.view.pool.size());
        const std::int64_t iters = (pool + setup.train.batch - 1) / setup.train.batch;
        for (std::int64_t it = 0; it < iters; ++it) {
            Rng rng_iter = Rng(state.seed)
                               .stream("train")
                               .stream(static_cast<std::uint64_t>(epoch))
                               .stream(static_cast<std::uint64_t>(it));
            Rng rng_sample = rng_iter.stream("sample");
            Rng rng_augment = rng_iter.stream("augment");
            const std::vector<std::int64_t> batch =
                pk_sample(phase.view, setup.train.p, setup.train.k, rng_sample);
            const IterationLosses losses =
                train_iteration(batch, state, setup, phase, dataset.train, lr, rng_augment);
            json line{{"epoch", epoch},
                      {"iter", it},
                      {"L_cluster_all", losses.cluster_all},
                      {"L_consistency", losses.consistency},
                      {"L_total", losses.total}};
            metrics << line.dump() << "\n";
        }
        metrics.flush();
        if (!metrics) throw IoError("write to '" + result.metrics_path + "' failed");

        state.epochs_done = epoch + 1;
        write_epoch_checkpoint(out_dir, state);
    }

    result.checkpoint_path = (fs::path(out_dir) / "checkpoint.ftnc").string();
    save_checkpoint(result.checkpoint_path, state);
    return result;
}

}  // namespace fancl
