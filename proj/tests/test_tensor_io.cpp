#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "fancl/errors.hpp"
#include "fancl/rng.hpp"
#include "fancl/tensor_io.hpp"
#include "support/test_util.hpp"

using namespace fancl;
using namespace fancl::testing;

#ifndef FANCL_GOLDEN_DIR
#error "FANCL_GOLDEN_DIR must point at the checked-in golden files"
#endif

namespace {
const std::filesystem::path kGolden = FANCL_GOLDEN_DIR;
}

TEST_SUITE("tensor_io") {

TEST_CASE("round trips are bit-exact for every dtype") {
    const auto dir = scratch_dir("io_roundtrip");
    Rng rng(31);

    const Tensor<float> f = random_tensor<float>(rng, {3, 4, 5});
    io::save_tensor((dir / "f.ftns").string(), f);
    CHECK(io::load_tensor<float>((dir / "f.ftns").string()) == f);

    const Tensor<double> d = random_tensor<double>(rng, {7});
    io::save_tensor((dir / "d.ftns").string(), d);
    CHECK(io::load_tensor<double>((dir / "d.ftns").string()) == d);

    Tensor<std::int32_t> i({2, 2});
    i[0] = -5;
    i[1] = 0;
    i[2] = 2147483647;
    i[3] = -2147483647 - 1;
    io::save_tensor((dir / "i.ftns").string(), i);
    CHECK(io::load_tensor<std::int32_t>((dir / "i.ftns").string()) == i);

    const Tensor<float> scalar = Tensor<float>::scalar(4.25f);
    io::save_tensor((dir / "s.ftns").string(), scalar);
    CHECK(io::load_tensor<float>((dir / "s.ftns").string()) == scalar);
}

TEST_CASE("zero-extent tensors produce valid empty-payload files") {
    const auto dir = scratch_dir("io_empty");
    const Tensor<float> z({0});
    io::save_tensor((dir / "z.ftns").string(), z);
    const Tensor<float> back = io::load_tensor<float>((dir / "z.ftns").string());
    CHECK(back.dims() == Dims{0});
    CHECK(back.numel() == 0);
}

TEST_CASE("bad magic is a format error at offset 0") {
    const auto dir = scratch_dir("io_badmagic");
    const auto path = (dir / "x.ftns").string();
    std::ofstream(path, std::ios::binary) << "XXXXrest of the file";
    CHECK_THROWS_WITH_AS((void)io::load_tensor<float>(path), doctest::Contains("offset 0"),
                         FormatError);
}

TEST_CASE("bad version and dtype report their offsets") {
    const auto dir = scratch_dir("io_badheader");
    const std::string good = slurp(kGolden / "golden_f32.ftns");

    std::string bad_version = good;
    bad_version[4] = 9;
    const auto vp = (dir / "v.ftns").string();
    std::ofstream(vp, std::ios::binary) << bad_version;
    CHECK_THROWS_WITH_AS((void)io::load_tensor<float>(vp), doctest::Contains("offset 4"),
                         FormatError);

    std::string bad_dtype = good;
    bad_dtype[5] = 7;
    const auto dp = (dir / "d.ftns").string();
    std::ofstream(dp, std::ios::binary) << bad_dtype;
    CHECK_THROWS_WITH_AS((void)io::load_tensor<float>(dp), doctest::Contains("offset 5"),
                         FormatError);
}

TEST_CASE("dtype mismatch and truncation are format errors") {
    const auto dir = scratch_dir("io_trunc");
    CHECK_THROWS_AS((void)io::load_tensor<double>((kGolden / "golden_f32.ftns").string()),
                    FormatError);

    const std::string good = slurp(kGolden / "golden_f32.ftns");
    const auto tp = (dir / "t.ftns").string();
    std::ofstream(tp, std::ios::binary) << good.substr(0, good.size() - 3);
    CHECK_THROWS_AS((void)io::load_tensor<float>(tp), FormatError);
}

TEST_CASE("golden files load with the expected contents") {
    const Tensor<float> f = io::load_tensor<float>((kGolden / "golden_f32.ftns").string());
    CHECK(f.dims() == Dims{2, 3});
    CHECK(f.at(0, 1) == 0.5f);
    CHECK(f.at(1, 2) == -3.5f);

    const Tensor<double> d = io::load_tensor<double>((kGolden / "golden_f64.ftns").string());
    CHECK(d[0] == 3.141592653589793);
    CHECK(d[1] == -1e-300);

    const Tensor<std::int32_t> i =
        io::load_tensor<std::int32_t>((kGolden / "golden_i32.ftns").string());
    CHECK(i[2] == 2147483647);
    CHECK(i[3] == -2147483647 - 1);

    const Tensor<float> e = io::load_tensor<float>((kGolden / "golden_empty.ftns").string());
    CHECK(e.numel() == 0);
}

TEST_CASE("writer reproduces the golden bytes") {
    // Byte-for-byte equality with files produced by an independent writer
    // pins the on-disk layout across hosts.
    const auto dir = scratch_dir("io_golden_bytes");
    Tensor<float> f({2, 3}, {0.0f, 0.5f, 1.0f, -1.0f, 2.25f, -3.5f});
    io::save_tensor((dir / "f.ftns").string(), f);
    CHECK(slurp(dir / "f.ftns") == slurp(kGolden / "golden_f32.ftns"));

    Tensor<std::int32_t> i({4});
    i[0] = 0;
    i[1] = -1;
    i[2] = 2147483647;
    i[3] = -2147483647 - 1;
    io::save_tensor((dir / "i.ftns").string(), i);
    CHECK(slurp(dir / "i.ftns") == slurp(kGolden / "golden_i32.ftns"));
}

TEST_CASE("probe_dtype reads only the header") {
    CHECK(io::probe_dtype((kGolden / "golden_f32.ftns").string()) == io::DType::f32);
    CHECK(io::probe_dtype((kGolden / "golden_f64.ftns").string()) == io::DType::f64);
    CHECK(io::probe_dtype((kGolden / "golden_i32.ftns").string()) == io::DType::i32);
}

TEST_CASE("container keeps sections in insertion order and round-trips") {
    const auto dir = scratch_dir("io_container");
    Rng rng(32);
    io::TensorContainer c;
    c.put("beta", random_tensor<float>(rng, {2, 2}));
    c.put("alpha", random_tensor<double>(rng, {3}));
    Tensor<std::int32_t> meta({1});
    meta[0] = 42;
    c.put("meta/epoch", meta);

    CHECK(c.names() == std::vector<std::string>{"beta", "alpha", "meta/epoch"});
    CHECK_THROWS_AS(c.put("beta", Tensor<float>({1})), ContractError);

    const auto path = (dir / "c.ftnc").string();
    c.save(path);
    const io::TensorContainer back = io::TensorContainer::load(path);
    CHECK(back.names() == c.names());
    CHECK(back.get_as<float>("beta") == c.get_as<float>("beta"));
    CHECK(back.get_as<double>("alpha") == c.get_as<double>("alpha"));
    CHECK(back.get_as<std::int32_t>("meta/epoch")[0] == 42);

    CHECK_THROWS_AS((void)back.get("missing"), FormatError);
    CHECK_THROWS_AS((void)back.get_as<double>("beta"), FormatError);
}

TEST_CASE("identical put sequences serialize byte-identically") {
    const auto dir = scratch_dir("io_container_bytes");
    auto build = [&](const std::string& name) {
        Rng rng(33);
        io::TensorContainer c;
        c.put("a", random_tensor<float>(rng, {4}));
        c.put("b", random_tensor<float>(rng, {2, 2}));
        const auto path = (dir / name).string();
        c.save(path);
        return slurp(dir / name);
    };
    CHECK(build("one.ftnc") == build("two.ftnc"));
}

}  // TEST_SUITE
