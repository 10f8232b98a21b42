#include <doctest.h>

#include "stmmot/checks.hpp"
#include "stmmot/spatial.hpp"
#include "stmmot/svp.hpp"

using namespace stmmot;

namespace {

PftlParams zero_residual(PftlParams p) {
    p.residual_w = Tensor(p.residual_w.shape());
    p.residual_b = Tensor(p.residual_b.shape());
    return p;
}

}  // namespace

TEST_CASE("offset field") {
    Rng rng(1);
    PftlParams p = PftlParams::random(3, rng, 0.3);
    const Tensor x0 = random_normal({3, 6, 5}, 1.0, rng), xp = random_normal({3, 6, 5}, 1.0, rng);
    const Tensor off = pftl_offsets(x0, xp, p);
    CHECK(off.shape() == Tensor::Shape{18, 6, 5});
    CHECK(max_abs_diff(off, conv2d(concat_channels(x0, xp), p.offset_w, p.offset_b, 1, 1)) == 0.0);
    p.offset_w = Tensor(p.offset_w.shape());
    p.offset_b = Tensor(p.offset_b.shape());
    const Tensor zero = pftl_offsets(x0, xp, p);
    for (double v : zero.data()) CHECK(v == 0.0);
}

TEST_CASE("mask is a spatial softmax per channel") {
    Rng rng(2);
    PftlParams p = PftlParams::random(3, rng, 0.3);
    const Tensor x0 = random_normal({3, 4, 4}, 1.0, rng), xp = random_normal({3, 4, 4}, 1.0, rng);
    const Tensor m = pftl_mask(x0, xp, p);
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < 16; ++i) s += m[c * 16 + i];
        CHECK(std::abs(s - 1.0) < 1e-12);
    }

    p.mask_cur_w = p.mask_ref_w;
    p.mask_cur_b = p.mask_ref_b;
    const Tensor uniform = pftl_mask(x0, x0, p);
    for (double v : uniform.data()) CHECK(std::abs(v - 1.0 / 16.0) < 1e-15);
}

TEST_CASE("mask concentrates on a dominating position") {
    Rng rng(3);
    PftlParams p = zero_residual(PftlParams::random(1, rng));
    p.mask_ref_w = Tensor({1, 1, 3, 3});
    p.mask_ref_w(0, 0, 1, 1) = 1.0;
    p.mask_cur_w = Tensor({1, 1, 3, 3});
    Tensor x0({1, 4, 4});
    x0(0, 2, 1) = 100.0;
    const Tensor m = pftl_mask(x0, Tensor({1, 4, 4}), p);
    CHECK(m(0, 2, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(m(0, 0, 0) < 1e-40);
}

TEST_CASE("zero offsets reduce deformable conv to conv2d") {
    Rng rng(4);
    const Tensor x = random_normal({4, 8, 8}, 1.0, rng);
    const Tensor w = random_normal({4, 4, 3, 3}, 1.0, rng), b = random_normal({4}, 1.0, rng);
    const Tensor d = deformable_conv(x, Tensor({18, 8, 8}), w, b);
    CHECK(max_abs_diff(d, conv2d(x, w, b, 1, 1)) <= 1e-9);
    auto r = checks::deformable_degeneration(20, rng);
    CHECK_MESSAGE(r.passed, r.detail);
}

TEST_CASE("integer offsets shift the sampling grid") {
    Rng rng(5);
    const Tensor x = random_normal({1, 6, 6}, 1.0, rng);
    Tensor w({1, 1, 3, 3});
    w(0, 0, 1, 1) = 1.0;  // center tap only
    Tensor off({18, 6, 6});
    for (std::size_t i = 0; i < 36; ++i) off[(2 * 4 + 1) * 36 + i] = 1.0;  // center tap dx = +1
    const Tensor d = deformable_conv(x, off, w, Tensor({1}));
    for (std::size_t y = 0; y < 6; ++y) {
        for (std::size_t c = 0; c + 1 < 6; ++c) CHECK(d(0, y, c) == x(0, y, c + 1));
        CHECK(d(0, y, 5) == 0.0);
    }
}

TEST_CASE("pftl preserves shape and is the identity with a zero residual") {
    Rng rng(6);
    const PftlParams p = PftlParams::random(4, rng, 0.2);
    const Tensor x0 = random_normal({4, 8, 8}, 1.0, rng), xp = random_normal({4, 8, 8}, 1.0, rng);
    const Tensor out = pftl_forward(x0, xp, p);
    CHECK(out.shape() == x0.shape());
    CHECK_FALSE(out == x0);
    CHECK(pftl_forward(x0, xp, zero_residual(p)) == x0);
    CHECK_THROWS_AS(pftl_forward(x0, random_normal({4, 4, 8}, 1.0, rng), p), std::invalid_argument);
}

TEST_CASE("single-level pyramid is the pftl chain") {
    Rng rng(7);
    const SvpParams p = SvpParams::random(3, 1, 3, rng, 0.2);
    const Tensor ref = random_normal({3, 6, 6}, 1.0, rng), cur = random_normal({3, 6, 6}, 1.0, rng);
    Tensor chain = cur;
    for (const auto& layer : p.pftl[0]) chain = pftl_forward(ref, chain, layer);
    const auto out = svp_forward({ref, cur}, p);
    REQUIRE(out.size() == 1);
    CHECK(out[0] == chain);
}

TEST_CASE("pyramid levels halve") {
    Rng rng(8);
    const SvpParams p = SvpParams::random(2, 3, 1, rng);
    const auto out = svp_forward({random_normal({2, 16, 16}, 1.0, rng)}, p);
    REQUIRE(out.size() == 3);
    CHECK(out[0].shape() == Tensor::Shape{2, 16, 16});
    CHECK(out[1].shape() == Tensor::Shape{2, 8, 8});
    CHECK(out[2].shape() == Tensor::Shape{2, 4, 4});
    CHECK_THROWS_AS(svp_forward({random_normal({2, 10, 10}, 1.0, rng)}, p), std::invalid_argument);
}

TEST_CASE("pyramid with pass-through merges returns the input at level 0") {
    Rng rng(9);
    const std::size_t C = 3;
    SvpParams p = SvpParams::random(C, 3, 2, rng, 0.2);
    for (auto& level : p.pftl)
        for (auto& layer : level) layer = zero_residual(layer);
    for (auto& w : p.merge_w) {
        w = Tensor(w.shape());
        for (std::size_t c = 0; c < C; ++c) w(c, C + c, 1, 1) = 1.0;
    }
    for (auto& b : p.merge_b) b = Tensor(b.shape());
    const Tensor x = random_normal({C, 16, 16}, 1.0, rng);
    CHECK(svp_forward({x}, p)[0] == x);
}

TEST_CASE("svp parameters round-trip through a store") {
    Rng rng(10);
    const SvpParams p = SvpParams::random(2, 2, 2, rng);
    ParamStore store;
    p.save(store);
    const SvpParams q = SvpParams::load(store);
    const Tensor x = random_normal({2, 8, 8}, 1.0, rng);
    CHECK(svp_forward({x}, p)[0] == svp_forward({x}, q)[0]);
}
