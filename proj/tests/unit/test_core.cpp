#include <doctest.h>

#include <cmath>
#include <limits>

#include "stmmot/attention.hpp"
#include "stmmot/checks.hpp"
#include "stmmot/params.hpp"
#include "stmmot/spatial.hpp"
#include "stmmot/tensor.hpp"

using namespace stmmot;

TEST_CASE("softmax of equal logits is uniform") {
    const Tensor s = softmax(Tensor::vector({0, 0, 0}), 0);
    for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax of [ln 2, 0] is [2/3, 1/3]") {
    const Tensor s = softmax(Tensor::vector({std::log(2.0), 0.0}), 0);
    CHECK(std::abs(s[0] - 2.0 / 3.0) < 1e-15);
    CHECK(std::abs(s[1] - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("softmax survives a dominating logit") {
    const Tensor s = softmax(Tensor::vector({100.0, 0.0}), 0);
    CHECK(s.all_finite());
    CHECK(s[1] < 1e-40);
    CHECK(s[1] > 0.0);
    CHECK(s[0] == 1.0);
}

TEST_CASE("softmax along rows of a matrix") {
    const Tensor m({2, 2}, std::vector<double>{0, 0, 1, 1});
    const Tensor s = softmax(m, 1);
    CHECK(s(0, 0) == 0.5);
    CHECK(s(1, 1) == 0.5);
    CHECK_THROWS_AS(softmax(m, 2), std::invalid_argument);
}

TEST_CASE("tensor shape errors") {
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2}).dim(1), std::invalid_argument);
}

TEST_CASE("attention over a single key returns its value") {
    Rng rng(1);
    const auto p = AttentionParams::identity(8, 1);
    const Tensor k = random_normal({1, 8}, 1.0, rng), v = random_normal({1, 8}, 1.0, rng);
    const Tensor q = random_normal({3, 8}, 1.0, rng);
    const Tensor out = attend(q, k, v, p);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(out(i, c) - v(0, c)) < 1e-15);
}

TEST_CASE("attention with tied logits averages the values") {
    const auto p = AttentionParams::identity(2, 1);
    const Tensor q({1, 2}, std::vector<double>{1, 0});
    const Tensor k({2, 2}, std::vector<double>{0, 1, 0, -1});
    const Tensor v({2, 2}, std::vector<double>{2, 4, 6, 8});
    const Tensor out = attend(q, k, v, p);
    CHECK(std::abs(out(0, 0) - 4.0) < 1e-15);
    CHECK(std::abs(out(0, 1) - 6.0) < 1e-15);
}

TEST_CASE("attention matches a loop reference") {
    Rng rng(2);
    for (std::size_t heads : {1, 2, 4}) {
        const AttentionParams p = random_attention(8, heads, rng, 0.5);
        const Tensor q = random_normal({3, 8}, 1.0, rng), k = random_normal({5, 8}, 1.0, rng),
                     v = random_normal({5, 8}, 1.0, rng);
        CHECK(max_abs_diff(attend(q, k, v, p), checks::naive_attention(q, k, v, p)) <= 1e-12);
    }
}

TEST_CASE("attention sink lowers mass on real keys") {
    auto p = AttentionParams::identity(2, 1);
    p.sink_logits = {0.0};
    const Tensor q({1, 2}, std::vector<double>{0, 0});
    const Tensor k({1, 2}, std::vector<double>{1, 1});
    const AttentionTrace t = attend_traced(q, k, k, p);
    CHECK(std::abs(t.weights[0] - 0.5) < 1e-15);
    CHECK(std::abs(t.sink_mass[0] - 0.5) < 1e-15);
    CHECK(std::abs(t.output(0, 0) - 0.5) < 1e-15);
}

TEST_CASE("attention rejects width not divisible by heads") {
    auto p = AttentionParams::identity(6, 1);
    p.n_heads = 4;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("1x1 unit kernel is the identity") {
    Rng rng(3);
    const Tensor x = random_normal({1, 4, 5}, 1.0, rng);
    CHECK(conv2d(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0) == x);
}

TEST_CASE("zero kernel yields the bias everywhere") {
    Rng rng(4);
    const Tensor x = random_normal({2, 5, 5}, 1.0, rng);
    const Tensor out = conv2d(x, Tensor({3, 2, 3, 3}), Tensor::vector({0.5, -1.0, 2.0}), 1, 1);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) CHECK(out(k, i, j) == std::vector<double>{0.5, -1.0, 2.0}[k]);
}

TEST_CASE("strided 3x3 conv on a ramp matches loops") {
    Tensor x({1, 5, 5});
    for (std::size_t i = 0; i < 25; ++i) x[i] = static_cast<double>(i);
    Rng rng(5);
    const Tensor w = random_normal({1, 1, 3, 3}, 1.0, rng), b = Tensor::vector({0.25});
    for (std::size_t pad : {0, 1}) {
        const Tensor out = conv2d(x, w, b, 2, pad);
        CHECK(max_abs_diff(out, checks::naive_conv2d(x, w, b, 2, pad)) <= 1e-12);
    }
    CHECK(conv2d(x, w, b, 2, 0).shape() == Tensor::Shape{1, 2, 2});
}

TEST_CASE("resize by one copies") {
    Rng rng(6);
    const Tensor x = random_normal({2, 3, 4}, 1.0, rng);
    CHECK(bilinear_resize(x, 1.0) == x);
}

TEST_CASE("resize keeps constants") {
    const Tensor out = bilinear_resize(Tensor({1, 3, 3}, 7.0), 2.0);
    CHECK(out.shape() == Tensor::Shape{1, 6, 6});
    for (double v : out.data()) CHECK(v == 7.0);
}

TEST_CASE("resize of a 2x2 field by two") {
    const Tensor x({1, 2, 2}, std::vector<double>{0, 1, 2, 3});
    const Tensor out = bilinear_resize(x, 2.0);
    // Pixel centers map to source coordinates 0, 0.25, 0.75, 1 (edges clamped);
    // the field is 2y + x, which bilinear interpolation reproduces exactly.
    const double c[4] = {0.0, 0.25, 0.75, 1.0};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(out(0, i, j) - (2.0 * c[i] + c[j])) < 1e-15);
}

TEST_CASE("bilinear sampling") {
    Rng rng(7);
    const Tensor x = random_normal({2, 4, 4}, 1.0, rng);
    CHECK(bilinear_at(x, 1, 1.0, 2.0) == x(1, 1, 2));
    const double mean = (x(0, 1, 1) + x(0, 1, 2) + x(0, 2, 1) + x(0, 2, 2)) / 4.0;
    CHECK(std::abs(bilinear_at(x, 0, 1.5, 1.5) - mean) < 1e-15);
    const SamplePoint far[] = {{-5.0, -5.0}};
    const Tensor s = bilinear_sample(x, far);
    CHECK(s(0, 0) == 0.0);
    CHECK(s(1, 0) == 0.0);
}
