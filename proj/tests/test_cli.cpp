#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fancl/cli.hpp"
#include "fancl/tensor_io.hpp"
#include "fancl/tensor.hpp"
#include "json.hpp"
#include "support/test_util.hpp"

using namespace fancl;
using namespace fancl::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int cli(std::initializer_list<std::string> args) {
    return run_cli(std::vector<std::string>(args));
}

/// Two tight unit-vector groups around e_x and e_y, distance 1 apart.
Tensor<float> grouped_features(std::int64_t per_group) {
    const std::int64_t n = 2 * per_group;
    Tensor<float> f({n, 3});
    for (std::int64_t i = 0; i < n; ++i) {
        const bool second = i >= per_group;
        const double wobble = 0.02 * static_cast<double>(i % per_group);
        const double a = std::cos(wobble), b = std::sin(wobble);
        f.at(i, second ? 1 : 0) = static_cast<float>(a);
        f.at(i, 2) = static_cast<float>(b);
    }
    return f;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage and dispatch exit codes") {
    CHECK(cli({}) == 1);
    CHECK(cli({"frobnicate"}) == 1);
    CHECK(cli({"--help"}) == 0);
    CHECK(cli({"help"}) == 0);
    CHECK(cli({"synth", "--help"}) == 0);
    CHECK(cli({"train", "--help"}) == 0);
    CHECK(cli({"eval", "--help"}) == 0);
    CHECK(cli({"cluster", "--help"}) == 0);
    CHECK(cli({"fana-preview", "--help"}) == 0);
}

TEST_CASE("missing required flags are usage errors") {
    CHECK(cli({"synth"}) == 1);
    CHECK(cli({"train", "--out", "/tmp/nowhere"}) == 1);
    CHECK(cli({"cluster"}) == 1);
    CHECK(cli({"eval", "--manifest", "whatever.jsonl"}) == 1);
    CHECK(cli({"synth", "--out", "/tmp/x", "--identities", "not-a-number"}) == 1);
}

TEST_CASE("runtime failures exit with 2") {
    const fs::path dir = scratch_dir("cli_runtime_err");
    CHECK(cli({"eval", "--checkpoint", (dir / "missing.ftnc").string(), "--manifest",
               (dir / "missing.jsonl").string()}) == 2);
    CHECK(cli({"cluster", "--features", (dir / "missing.ftns").string()}) == 2);
    // Config file that does not exist.
    CHECK(cli({"cluster", "--config", (dir / "absent.json").string(), "--features",
               (dir / "missing.ftns").string()}) == 2);
}

TEST_CASE("synth, train and eval run end to end") {
    const fs::path dir = scratch_dir("cli_e2e");
    const fs::path data = dir / "data";
    const fs::path run = dir / "run";

    CHECK(cli({"synth", "--out", data.string(), "--identities", "2", "--images", "10",
               "--height", "8", "--width", "8", "--channels", "1", "--seed", "4"}) == 0);
    CHECK(fs::exists(data / "manifest.jsonl"));

    CHECK(cli({"train", "--manifest", (data / "manifest.jsonl").string(), "--out",
               run.string(), "--epochs", "1", "--batch", "4", "--p", "2", "--k", "2",
               "--dim", "8", "--eps", "1.5", "--min-pts", "1", "--seed", "9"}) == 0);
    CHECK(fs::exists(run / "checkpoint.ftnc"));
    CHECK(fs::exists(run / "metrics.jsonl"));

    const fs::path report = dir / "report.json";
    CHECK(cli({"eval", "--checkpoint", (run / "checkpoint.ftnc").string(), "--manifest",
               (data / "manifest.jsonl").string(), "--out", report.string()}) == 0);
    const json r = json::parse(slurp(report));
    CHECK(r.at("n_query").get<std::int64_t>() == 2);
    CHECK(r.at("n_gallery").get<std::int64_t>() == 6);
    CHECK(r.at("mAP").get<double>() >= 0.0);
    CHECK(r.at("mAP").get<double>() <= 1.0);
    CHECK(r.at("rank1").get<double>() >= 0.0);
    CHECK(r.contains("rank5"));
    CHECK(r.contains("rank10"));

    // Unknown feature space is a runtime failure, not a usage error.
    CHECK(cli({"eval", "--checkpoint", (run / "checkpoint.ftnc").string(), "--manifest",
               (data / "manifest.jsonl").string(), "--feature-space", "imaginary"}) == 2);
}

TEST_CASE("cluster writes the labeling and the summary") {
    const fs::path dir = scratch_dir("cli_cluster");
    const fs::path feats = dir / "features.ftns";
    io::save_tensor(feats.string(), grouped_features(5));

    const fs::path labels = dir / "labels.ftns";
    const fs::path summary = dir / "summary.json";
    CHECK(cli({"cluster", "--features", feats.string(), "--labels-out", labels.string(),
               "--summary-out", summary.string(), "--eps", "0.5", "--min-pts", "2"}) == 0);

    const json s = json::parse(slurp(summary));
    CHECK(s.at("clusters").get<int>() == 2);
    CHECK(s.at("outliers").get<int>() == 0);
    CHECK(s.at("samples").get<int>() == 10);

    const Tensor<std::int32_t> lab = io::load_tensor<std::int32_t>(labels.string());
    REQUIRE(lab.dims() == Dims{10});
    for (std::int64_t i = 0; i < 5; ++i) CHECK(lab[i] == 0);
    for (std::int64_t i = 5; i < 10; ++i) CHECK(lab[i] == 1);
}

TEST_CASE("fana-preview writes map, mask and noised image with the exact budget") {
    const fs::path dir = scratch_dir("cli_fana");
    const fs::path img_path = dir / "image.ftns";
    Tensor<float> image({2, 8, 8});
    for (std::int64_t i = 0; i < image.numel(); ++i)
        image[i] = 0.1f + 0.8f * static_cast<float>(i) / static_cast<float>(image.numel());
    io::save_tensor(img_path.string(), image);

    const fs::path out = dir / "preview";
    CHECK(cli({"fana-preview", "--image", img_path.string(), "--rho", "0.25", "--seed", "3",
               "--out", out.string()}) == 0);

    const Tensor<float> map = io::load_tensor<float>((out / "map.ftns").string());
    const Tensor<std::int32_t> mask = io::load_tensor<std::int32_t>((out / "mask.ftns").string());
    const Tensor<float> noised = io::load_tensor<float>((out / "noised.ftns").string());
    REQUIRE(map.dims() == Dims{8, 8});
    REQUIRE(mask.dims() == Dims{8, 8});
    REQUIRE(noised.dims() == Dims{2, 8, 8});

    std::int64_t ones = 0;
    for (std::int64_t i = 0; i < mask.numel(); ++i) ones += mask[i];
    CHECK(ones == 16);  // round(0.25 * 64)
    for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t y = 0; y < 8; ++y)
            for (std::int64_t x = 0; x < 8; ++x) {
                if (mask.at(y, x) == 1) CHECK(noised.at(c, y, x) == 0.0f);
                else CHECK(noised.at(c, y, x) == image.at(c, y, x));
            }
}

TEST_CASE("config files provide defaults that explicit flags override") {
    const fs::path dir = scratch_dir("cli_config");
    const fs::path feats = dir / "features.ftns";
    io::save_tensor(feats.string(), grouped_features(4));

    const fs::path cfg = dir / "flags.json";
    {
        std::ofstream out(cfg);
        out << R"({"eps": 1.9, "min-pts": 1})" << "\n";
    }

    // eps 1.9 reaches across the two groups: one cluster.
    const fs::path wide = dir / "wide.json";
    CHECK(cli({"cluster", "--config", cfg.string(), "--features", feats.string(),
               "--summary-out", wide.string()}) == 0);
    CHECK(json::parse(slurp(wide)).at("clusters").get<int>() == 1);

    // An explicit --eps wins over the config value.
    const fs::path narrow = dir / "narrow.json";
    CHECK(cli({"cluster", "--config", cfg.string(), "--features", feats.string(),
               "--eps", "0.5", "--summary-out", narrow.string()}) == 0);
    CHECK(json::parse(slurp(narrow)).at("clusters").get<int>() == 2);

    // Malformed JSON is a runtime failure.
    const fs::path bad = dir / "bad.json";
    {
        std::ofstream out(bad);
        out << "{ not json";
    }
    CHECK(cli({"cluster", "--config", bad.string(), "--features", feats.string()}) == 2);
}

}  // TEST_SUITE
