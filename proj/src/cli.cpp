#include "fancl/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "fancl/checkpoint.hpp"
#include "fancl/clustering.hpp"
#include "fancl/dataset.hpp"
#include "fancl/errors.hpp"
#include "fancl/evalkit.hpp"
#include "fancl/fana.hpp"
#include "fancl/kernels.hpp"
#include "fancl/synthetic.hpp"
#include "fancl/tensor_io.hpp"
#include "fancl/trainer.hpp"
#include "json.hpp"

namespace fancl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Expands `--config file.json` into ordinary flag tokens placed before the
/// user's own flags, so explicit flags win. JSON booleans inject the flag
/// when true; everything else becomes "--key value".
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::string config_path;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a == "--config") {
            if (i + 1 >= args.size()) throw ConfigError("--config expects a file path");
            config_path = args[++i];
        } else if (a.rfind("--config=", 0) == 0) {
            config_path = a.substr(9);
        } else {
            rest.push_back(a);
        }
    }
    if (config_path.empty()) return rest;

    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config '" + config_path + "'");
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError("config '" + config_path + "': " + e.what());
    }
    if (!cfg.is_object()) throw FormatError("config '" + config_path + "' must be a JSON object");

    std::vector<std::string> expanded;
    for (const auto& [key, value] : cfg.items()) {
        if (value.is_boolean()) {
            if (value.get<bool>()) expanded.push_back("--" + key);
        } else if (value.is_string()) {
            expanded.push_back("--" + key);
            expanded.push_back(value.get<std::string>());
        } else {
            expanded.push_back("--" + key);
            expanded.push_back(value.dump());
        }
    }
    expanded.insert(expanded.end(), rest.begin(), rest.end());
    return expanded;
}

/// Parses; returns false when help was requested (already printed).
/// Other parse errors propagate to run_cli's usage-error handler.
bool parse_into(CLI::App& app, std::vector<std::string> args) {
    // CLI11 wants reversed argv-style input without the program name.
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return false;
    }
    return true;
}

struct TrainFlags {
    std::string manifest;
    std::string out;
    std::string resume;
    std::string probe_source = "dedicated";
    bool no_consistency_cluster = false;
    bool no_consistency_instance = false;
    TrainSetup setup;
};

void add_train_flags(CLI::App& app, TrainFlags& f) {
    app.add_option("--manifest", f.manifest, "dataset manifest (JSON lines)")->required();
    app.add_option("--out", f.out, "output directory")->required();
    app.add_option("--resume", f.resume, "checkpoint to continue from");
    app.add_option("--epochs", f.setup.train.epochs, "training epochs");
    app.add_option("--seed", f.setup.train.seed, "master seed");
    app.add_option("--lr", f.setup.train.base_lr, "base learning rate");
    app.add_option("--batch", f.setup.train.batch, "batch size (P*K)");
    app.add_option("--p", f.setup.train.p, "identities per batch");
    app.add_option("--k", f.setup.train.k, "instances per identity");
    app.add_option("--wd", f.setup.adam.weight_decay, "weight decay");
    app.add_option("--rho", f.setup.fana.rho, "noise proportion");
    app.add_option("--patch", f.setup.fana.patch, "noise patch size in pixels");
    app.add_option("--probe-source", f.probe_source,
                   "activation probe: dedicated | branch-conv | branch-batchnorm");
    app.add_option("--eps", f.setup.dbscan.eps, "DBSCAN radius");
    app.add_option("--min-pts", f.setup.dbscan.min_pts, "DBSCAN core threshold");
    app.add_option("--tau", f.setup.loss.tau, "loss temperature");
    app.add_option("--alpha", f.setup.memory.alpha, "bank momentum");
    app.add_option("--dim", f.setup.encoder.dim, "embedding dimension");
    app.add_flag("--no-consistency-cluster", f.no_consistency_cluster,
                 "drop the cluster-level consistency term");
    app.add_flag("--no-consistency-instance", f.no_consistency_instance,
                 "drop the instance-level consistency term");
}

int cmd_synth(std::vector<std::string> args) {
    CLI::App app{"generate a synthetic identity dataset"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    SyntheticConfig cfg;
    std::string out;
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--seed", cfg.seed, "master seed");
    app.add_option("--identities", cfg.n_identities, "number of identities");
    app.add_option("--images", cfg.images_per_identity, "images per identity");
    app.add_option("--height", cfg.height, "image height");
    app.add_option("--width", cfg.width, "image width");
    app.add_option("--channels", cfg.channels, "image channels");
    if (!parse_into(app, std::move(args))) return 0;
    const auto entries = generate_synthetic(cfg, out);
    std::printf("wrote %zu images under %s (manifest.jsonl included)\n", entries.size(),
                out.c_str());
    return 0;
}

int cmd_train(std::vector<std::string> args) {
    CLI::App app{"run the training pipeline"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    TrainFlags f;
    add_train_flags(app, f);
    if (!parse_into(app, std::move(args))) return 0;
    f.setup.fana.source = probe_source_from_string(f.probe_source);
    f.setup.loss.consistency_cluster = !f.no_consistency_cluster;
    f.setup.loss.consistency_instance = !f.no_consistency_instance;
    const Dataset dataset = load_dataset(f.manifest);
    if (!dataset.train.images.empty()) {
        const Dims& d = dataset.train.images.front().dims();
        f.setup.encoder.in_channels = d[0];
        f.setup.encoder.height = d[1];
        f.setup.encoder.width = d[2];
    }
    const TrainResult result = run_training(dataset, f.setup, f.out, f.resume);
    std::printf("final checkpoint: %s\nmetrics: %s\n", result.checkpoint_path.c_str(),
                result.metrics_path.c_str());
    return 0;
}

Tensor<float> features_for_split(const TrainState& state, const DatasetSplit& split,
                                 const std::string& space, double rho, std::int64_t patch) {
    std::vector<Tensor<float>> noised;
    if (space != "original") {
        FanaConfig fana_cfg;
        fana_cfg.rho = rho;
        fana_cfg.patch = patch;
        noised.reserve(split.images.size());
        for (const Tensor<float>& img : split.images)
            noised.push_back(fana(state.probe, fana_cfg, img));
    }
    const auto n = static_cast<std::int64_t>(split.images.size());
    const EncoderConfig& enc = state.encoder;
    Tensor<float> out({n, enc.dim});
    const std::int64_t chunk = 128;
    for (std::int64_t start = 0; start < n; start += chunk) {
        const std::int64_t stop = std::min(n, start + chunk);
        Tensor<float> feats;
        if (space == "original" || space == "fused") {
            std::vector<Tensor<float>> slice(split.images.begin() + start,
                                             split.images.begin() + stop);
            feats = forward_branch(enc, state.theta, kern::stack_batch(slice));
        }
        if (space == "noised" || space == "fused") {
            std::vector<Tensor<float>> slice(noised.begin() + start, noised.begin() + stop);
            Tensor<float> ft = forward_branch(enc, state.theta_prime, kern::stack_batch(slice));
            feats = space == "fused" ? forward_fusion(enc, state.fusion, feats, ft)
                                     : std::move(ft);
        }
        for (std::int64_t i = 0; i < stop - start; ++i)
            for (std::int64_t d = 0; d < enc.dim; ++d) out.at(start + i, d) = feats.at(i, d);
    }
    return out;
}

int cmd_eval(std::vector<std::string> args) {
    CLI::App app{"evaluate retrieval metrics from a checkpoint"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string checkpoint, manifest, space = "original", report_path;
    double rho = 0.05;
    std::int64_t patch = 1;
    app.add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    app.add_option("--manifest", manifest, "dataset manifest")->required();
    app.add_option("--feature-space", space, "original | noised | fused");
    app.add_option("--rho", rho, "noise proportion for the noised/fused spaces");
    app.add_option("--patch", patch, "noise patch size for the noised/fused spaces");
    app.add_option("--out", report_path, "also write the JSON report here");
    if (!parse_into(app, std::move(args))) return 0;
    if (space != "original" && space != "noised" && space != "fused")
        throw ConfigError("--feature-space must be original | noised | fused");

    const TrainState state = load_checkpoint(checkpoint);
    const Dataset dataset = load_dataset(manifest);
    if (dataset.query.size() == 0 || dataset.gallery.size() == 0)
        throw ContractError("evaluation needs non-empty query and gallery splits");
    const Tensor<float> qf = features_for_split(state, dataset.query, space, rho, patch);
    const Tensor<float> gf = features_for_split(state, dataset.gallery, space, rho, patch);
    const Metrics m = evaluate(qf, dataset.query.ids, gf, dataset.gallery.ids);

    json report{{"mAP", m.map},        {"rank1", m.rank1},
                {"rank5", m.rank5},    {"rank10", m.rank10},
                {"n_query", m.n_query}, {"n_gallery", m.n_gallery}};
    std::cout << report.dump() << "\n";
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) throw IoError("cannot open '" + report_path + "' for writing");
        out << report.dump() << "\n";
    }
    return 0;
}

int cmd_cluster(std::vector<std::string> args) {
    CLI::App app{"cluster a feature tensor file with DBSCAN"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string features_path, labels_path, summary_path;
    DbscanConfig cfg;
    app.add_option("--features", features_path, "feature tensor file (N, D), unit rows")
        ->required();
    app.add_option("--labels-out", labels_path, "write labels as an i32 tensor file");
    app.add_option("--summary-out", summary_path, "also write the JSON summary here");
    app.add_option("--eps", cfg.eps, "DBSCAN radius");
    app.add_option("--min-pts", cfg.min_pts, "DBSCAN core threshold");
    if (!parse_into(app, std::move(args))) return 0;

    const Tensor<float> features = io::load_tensor<float>(features_path);
    const PseudoLabeling labeling = dbscan(pairwise_cosine_distance(features), cfg);
    std::int64_t outliers = 0;
    for (std::int32_t l : labeling.labels) outliers += l == kOutlier ? 1 : 0;

    if (!labels_path.empty()) {
        Tensor<std::int32_t> t({static_cast<std::int64_t>(labeling.labels.size())});
        for (std::size_t i = 0; i < labeling.labels.size(); ++i)
            t[static_cast<std::int64_t>(i)] = labeling.labels[i];
        io::save_tensor(labels_path, t);
    }
    json summary{{"clusters", labeling.num_clusters}, {"outliers", outliers},
                 {"samples", labeling.labels.size()}};
    std::cout << summary.dump() << "\n";
    if (!summary_path.empty()) {
        std::ofstream out(summary_path);
        if (!out) throw IoError("cannot open '" + summary_path + "' for writing");
        out << summary.dump() << "\n";
    }
    return 0;
}

int cmd_fana_preview(std::vector<std::string> args) {
    CLI::App app{"write the activation map, mask and noised image for one input"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string image_path, out_dir = ".";
    FanaConfig cfg;
    std::uint64_t seed = 0;
    app.add_option("--image", image_path, "input image tensor file (C, H, W)")->required();
    app.add_option("--rho", cfg.rho, "noise proportion");
    app.add_option("--patch", cfg.patch, "noise patch size in pixels");
    app.add_option("--seed", seed, "probe seed");
    app.add_option("--out", out_dir, "output directory");
    if (!parse_into(app, std::move(args))) return 0;
    cfg.validate();

    const Tensor<float> image = io::load_tensor<float>(image_path);
    if (image.rank() != 3)
        throw FormatError("image '" + image_path + "' must be (C, H, W), got " +
                          dims_to_string(image.dims()));
    EncoderConfig enc;
    enc.in_channels = image.dim(0);
    enc.height = image.dim(1);
    enc.width = image.dim(2);
    BranchParams<float> unused;
    const ActivationProbe<float> probe =
        make_probe<float>(ProbeSource::dedicated, enc, unused, seed);
    const Tensor<float> map = activation_map(probe, image);
    const Tensor<std::int32_t> mask = noise_mask(map, cfg.rho, cfg.patch);
    const Tensor<float> noised = apply_pepper_noise(image, mask);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir + "': " + ec.message());
    io::save_tensor((fs::path(out_dir) / "map.ftns").string(), map);
    io::save_tensor((fs::path(out_dir) / "mask.ftns").string(), mask);
    io::save_tensor((fs::path(out_dir) / "noised.ftns").string(), noised);
    std::int64_t ones = 0;
    for (std::int64_t i = 0; i < mask.numel(); ++i) ones += mask[i];
    std::printf("map/mask/noised written under %s (mask: %lld of %lld pixels)\n",
                out_dir.c_str(), static_cast<long long>(ones),
                static_cast<long long>(mask.numel()));
    return 0;
}

void print_usage() {
    std::fprintf(stderr,
                 "usage: fancl <synth | train | eval | cluster | fana-preview> [flags]\n"
                 "       fancl <subcommand> --help for details\n"
                 "       --config <file.json> supplies defaults for any flag\n");
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    if (args.empty()) {
        print_usage();
        return 1;
    }
    const std::string& cmd = args.front();
    std::vector<std::string> rest(args.begin() + 1, args.end());
    try {
        rest = expand_config(rest);
        if (cmd == "synth") return cmd_synth(std::move(rest));
        if (cmd == "train") return cmd_train(std::move(rest));
        if (cmd == "eval") return cmd_eval(std::move(rest));
        if (cmd == "cluster") return cmd_cluster(std::move(rest));
        if (cmd == "fana-preview") return cmd_fana_preview(std::move(rest));
        if (cmd == "--help" || cmd == "-h" || cmd == "help") {
            print_usage();
            return 0;
        }
        std::fprintf(stderr, "unknown subcommand '%s'\n", cmd.c_str());
        print_usage();
        return 1;
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

}  // namespace fancl
