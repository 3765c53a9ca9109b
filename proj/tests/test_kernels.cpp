#include <cmath>

#include "doctest.h"
#include "fancl/errors.hpp"
#include "fancl/kernels.hpp"
#include "fancl/rng.hpp"
#include "support/test_util.hpp"

using namespace fancl;
using fancl::testing::random_tensor;

TEST_SUITE("kernels") {

TEST_CASE("relu clamps negatives") {
    const Tensor<float> x({3}, {-1.0f, 0.0f, 2.0f});
    const Tensor<float> y = kern::relu(x);
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == 0.0f);
    CHECK(y[2] == 2.0f);
}

TEST_CASE("matmul against the identity") {
    Rng rng(1);
    const Tensor<double> x = random_tensor<double>(rng, {3, 5});
    Tensor<double> eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    CHECK(kern::matmul(eye, x) == x);
}

TEST_CASE("matmul rank-1 rhs") {
    const Tensor<double> a({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor<double> v({3}, {1, 0, -1});
    const Tensor<double> y = kern::matmul(a, v);
    REQUIRE(y.dims() == Dims{2});
    CHECK(y[0] == doctest::Approx(-2.0));
    CHECK(y[1] == doctest::Approx(-2.0));
}

TEST_CASE("matmul rejects mismatched inner extents") {
    CHECK_THROWS_AS(kern::matmul(Tensor<double>({2, 3}), Tensor<double>({4, 2})), ShapeError);
}

TEST_CASE("conv2d with a 1x1 identity kernel is the identity") {
    Rng rng(2);
    const Tensor<float> x = random_tensor<float>(rng, {2, 1, 4, 5});
    Tensor<float> w({1, 1, 1, 1});
    w[0] = 1.0f;
    const Tensor<float> b({1});
    CHECK(kern::conv2d(x, w, b, 1, 0) == x);
}

TEST_CASE("conv2d output extents follow the formula") {
    for (std::int64_t k : {1, 2, 3}) {
        for (std::int64_t stride : {1, 2, 3}) {
            for (std::int64_t pad : {0, 1, 2}) {
                const std::int64_t h = 7, w = 9;
                if (h + 2 * pad < k) continue;
                const Dims out = kern::conv2d_out_dims({2, 3, h, w}, {4, 3, k, k}, stride, pad);
                CHECK(out[2] == (h + 2 * pad - k) / stride + 1);
                CHECK(out[3] == (w + 2 * pad - k) / stride + 1);
            }
        }
    }
}

TEST_CASE("conv2d known 2x2 sum kernel") {
    // 1x1x2x2 input, all-ones 2x2 kernel, pad 0: single output = sum.
    const Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
    const Tensor<double> w = Tensor<double>::full({1, 1, 2, 2}, 1.0);
    const Tensor<double> b({1}, {0.5});
    const Tensor<double> y = kern::conv2d(x, w, b, 1, 0);
    REQUIRE(y.dims() == Dims{1, 1, 1, 1});
    CHECK(y[0] == doctest::Approx(10.5));
}

TEST_CASE("batchnorm statistics are biased per channel") {
    const Tensor<double> x({4, 1}, {1.0, 2.0, 3.0, 4.0});
    Tensor<double> mean, var;
    kern::batchnorm_stats(x, mean, var);
    CHECK(mean[0] == doctest::Approx(2.5));
    CHECK(var[0] == doctest::Approx(1.25));  // biased: mean of squared deviations
}

TEST_CASE("batchnorm train output is standardized pre-affine") {
    Rng rng(3);
    const Tensor<double> x = random_tensor<double>(rng, {6, 3, 4, 4}, -2.0, 5.0);
    Tensor<double> mean, var;
    kern::batchnorm_stats(x, mean, var);
    Tensor<double> invstd({3});
    for (int c = 0; c < 3; ++c) invstd[c] = 1.0 / std::sqrt(var[c] + 1e-5);
    const Tensor<double> gamma = Tensor<double>::full({3}, 1.0);
    const Tensor<double> beta({3});
    const Tensor<double> y = kern::batchnorm_apply(x, gamma, beta, mean, invstd);

    for (int c = 0; c < 3; ++c) {
        double sum = 0.0, sq = 0.0;
        std::int64_t n = 0;
        for (int bi = 0; bi < 6; ++bi)
            for (int h = 0; h < 4; ++h)
                for (int w = 0; w < 4; ++w) {
                    const double v = y.at(bi, c, h, w);
                    sum += v;
                    sq += v * v;
                    ++n;
                }
        const double m = sum / n;
        CHECK(std::abs(m) < 1e-5);
        CHECK(sq / n - m * m == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("l2_normalize yields unit rows and the forced example") {
    const Tensor<double> v({1, 2}, {0.5, 0.5});
    const Tensor<double> y = kern::l2_normalize(v, 1e-12);
    CHECK(y[0] == doctest::Approx(0.70710678).epsilon(1e-8));
    CHECK(y[1] == doctest::Approx(0.70710678).epsilon(1e-8));

    Rng rng(4);
    const Tensor<double> x = random_tensor<double>(rng, {5, 7}, -3.0, 3.0);
    const Tensor<double> u = kern::l2_normalize(x, 1e-12);
    for (int i = 0; i < 5; ++i) {
        double sq = 0.0;
        for (int k = 0; k < 7; ++k) sq += u.at(i, k) * u.at(i, k);
        CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("l2_normalize clamps degenerate rows instead of dividing by zero") {
    const Tensor<double> z({1, 3});
    const Tensor<double> y = kern::l2_normalize(z, 1e-12);
    CHECK(y.all_finite());
    for (int k = 0; k < 3; ++k) CHECK(y[k] == 0.0);
}

TEST_CASE("bilinear resize: constants, midpoint, identity") {
    const Tensor<float> c = Tensor<float>::full({2, 2}, 0.7f);
    const Tensor<float> up = kern::bilinear_resize(c, 5, 9);
    for (std::int64_t i = 0; i < up.numel(); ++i) CHECK(up[i] == doctest::Approx(0.7f));

    const Tensor<double> row({1, 2}, {0.0, 1.0});
    const Tensor<double> mid = kern::bilinear_resize(row, 1, 3);
    CHECK(mid[0] == doctest::Approx(0.0));
    CHECK(mid[1] == doctest::Approx(0.5));
    CHECK(mid[2] == doctest::Approx(1.0));

    Rng rng(5);
    const Tensor<float> img = random_tensor<float>(rng, {4, 6, 3});
    CHECK(kern::bilinear_resize(img, 4, 6) == img);
}

TEST_CASE("bilinear resize rejects empty targets") {
    CHECK_THROWS_AS(kern::bilinear_resize(Tensor<float>({2, 2}), 0, 3), ShapeError);
}

TEST_CASE("add broadcasts a rank-1 rhs across rows") {
    const Tensor<double> a({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor<double> v({3}, {10, 20, 30});
    const Tensor<double> y = kern::add(a, v);
    CHECK(y.at(0, 0) == 11.0);
    CHECK(y.at(1, 2) == 36.0);
    CHECK_THROWS_AS(kern::add(a, Tensor<double>({4})), ShapeError);
}

TEST_CASE("concat along both axes") {
    const Tensor<double> a({1, 2}, {1, 2});
    const Tensor<double> b({1, 2}, {3, 4});
    const Tensor<double> rows = kern::concat<double>({&a, &b}, 0);
    CHECK(rows.dims() == Dims{2, 2});
    CHECK(rows.at(1, 0) == 3.0);
    const Tensor<double> cols = kern::concat<double>({&a, &b}, 1);
    CHECK(cols.dims() == Dims{1, 4});
    CHECK(cols.at(0, 2) == 3.0);
}

TEST_CASE("global average pool and reduce_sum") {
    const Tensor<double> x({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
    const Tensor<double> p = kern::global_avg_pool(x);
    CHECK(p.dims() == Dims{1, 2});
    CHECK(p.at(0, 0) == doctest::Approx(2.5));
    CHECK(p.at(0, 1) == doctest::Approx(25.0));

    const Tensor<double> s = kern::reduce_sum(x);
    CHECK(s.is_scalar());
    CHECK(s.value() == doctest::Approx(110.0));
}

TEST_CASE("layout conversions round-trip") {
    Rng rng(6);
    const Tensor<float> hwc = random_tensor<float>(rng, {4, 5, 3});
    const Tensor<float> chw = kern::hwc_to_chw(hwc);
    CHECK(chw.dims() == Dims{3, 4, 5});
    CHECK(chw.at(2, 1, 3) == hwc.at(1, 3, 2));
    CHECK(kern::chw_to_hwc(chw) == hwc);
}

TEST_CASE("stack_batch prepends the batch axis") {
    Rng rng(7);
    std::vector<Tensor<float>> imgs{random_tensor<float>(rng, {3, 2, 2}),
                                    random_tensor<float>(rng, {3, 2, 2})};
    const Tensor<float> b = kern::stack_batch(imgs);
    CHECK(b.dims() == Dims{2, 3, 2, 2});
    CHECK(b.at(1, 2, 1, 1) == imgs[1].at(2, 1, 1));
}

TEST_CASE("sigmoid, exp, log spot values") {
    const Tensor<double> x({3}, {0.0, 1.0, -1.0});
    const Tensor<double> s = kern::sigmoid(x);
    CHECK(s[0] == doctest::Approx(0.5));
    CHECK(s[1] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    const Tensor<double> e = kern::exp(x);
    CHECK(e[1] == doctest::Approx(std::exp(1.0)));
    const Tensor<double> pos({2}, {1.0, std::exp(2.0)});
    const Tensor<double> l = kern::log(pos);
    CHECK(l[0] == doctest::Approx(0.0));
    CHECK(l[1] == doctest::Approx(2.0));
}

}  // TEST_SUITE
