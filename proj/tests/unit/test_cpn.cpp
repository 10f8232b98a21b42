#include <doctest.h>

#include <cmath>
#include <numeric>

#include "stmmot/checks.hpp"
#include "stmmot/cpn.hpp"

using namespace stmmot;

namespace {

CpnDims small_dims() { return {4, 16, 2, 1, 2, 32}; }

}  // namespace

TEST_CASE("positional encoding of a single cell") {
    const Tensor pe = positional_encoding(1, 1, 8);
    CHECK(pe.shape() == Tensor::Shape{1, 8});
    // sine channels sit at even offsets of each half; position 0 gives sin(0)
    for (std::size_t c : {0, 2, 4, 6}) CHECK(pe(0, c) == 0.0);
    for (std::size_t c : {1, 3, 5, 7}) CHECK(pe(0, c) == 1.0);
}

TEST_CASE("positional encoding separates axes") {
    const std::size_t d = 16;
    const Tensor pe = positional_encoding(3, 4, d);
    for (std::size_t c = 0; c < d / 2; ++c) CHECK(pe(0, c) == pe(1, c));
    bool differs = false;
    for (std::size_t c = d / 2; c < d; ++c) differs = differs || pe(0, c) != pe(1, c);
    CHECK(differs);
}

TEST_CASE("positional encoding rows have norm sqrt(d/2)") {
    const std::size_t d = 64;
    const Tensor pe = positional_encoding(5, 7, d);
    for (std::size_t r = 0; r < 35; ++r) CHECK(std::abs(l2_norm(pe.row(r)) - std::sqrt(d / 2.0)) < 1e-9);
    CHECK_THROWS_AS(positional_encoding(2, 2, 6), std::invalid_argument);
}

TEST_CASE("encoder output shape and determinism") {
    Rng rng(1);
    CpnDims dims{16, 64, 4, 2, 2, 128};
    const CpnParams p = CpnParams::random(dims, rng);
    const Tensor f0 = random_normal({16, 8, 8}, 1.0, rng);
    const EncodedFrame a = encode_frame(f0, p), b = encode_frame(f0, p);
    CHECK(a.features.shape() == Tensor::Shape{64, 64});
    CHECK(a.features == b.features);
    CHECK_THROWS_AS(encode_frame(random_normal({3, 8, 8}, 1.0, rng), p), std::invalid_argument);
}

TEST_CASE("encoder with a zero input projection sees only positions") {
    Rng rng(2);
    CpnParams p = CpnParams::random(small_dims(), rng);
    p.input_w = Tensor(p.input_w.shape());
    const EncodedFrame zero = encode_frame(Tensor({4, 3, 3}), p);
    const EncodedFrame other = encode_frame(Tensor({4, 3, 3}, 2.5), p);
    CHECK(zero.features == other.features);
}

TEST_CASE("proposals stay in range") {
    Rng rng(3);
    CpnDims dims = small_dims();
    for (int trial = 0; trial < 5; ++trial) {
        CpnParams p = CpnParams::random(dims, rng);
        p.box_w = random_normal(p.box_w.shape(), 3.0, rng);
        p.obj_w = random_normal(p.obj_w.shape(), 3.0, rng);
        const auto frame = encode_frame(random_normal({4, 4, 4}, 1.0, rng), p);
        const auto props = propose(frame, ObjectQuerySet::random(6, 16, rng), p);
        CHECK(props.size() == 6);
        for (const auto& pr : props) {
            for (double v : pr.box.as_array()) CHECK((v >= 0.0 && v <= 1.0));
            CHECK((pr.objectness >= 0.0 && pr.objectness <= 1.0));
        }
    }
}

TEST_CASE("proposals follow a permutation of the queries") {
    Rng rng(4);
    auto r = checks::equivariance(10, rng);
    CHECK_MESSAGE(r.passed, r.detail);
    CHECK(r.worst <= 1e-12);
}

TEST_CASE("single memory row gives every query the same cross summand") {
    Rng rng(5);
    CpnParams p = CpnParams::random(small_dims(), rng);
    for (auto& layer : p.decoder) layer.cross_attn = AttentionParams::identity(16, 2);
    const EncodedFrame frame = encode_frame(random_normal({4, 1, 1}, 1.0, rng), p);
    const auto trace = propose_traced(frame, ObjectQuerySet::random(5, 16, rng), p);
    for (const Tensor& s : trace.cross_summands) {
        // one key: softmax weight 1, so the summand is that key's value row
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(s(i, c) - frame.features(0, c)) < 1e-15);
    }
}

TEST_CASE("object queries must be distinct") {
    Tensor e({2, 4}, 1.0);
    CHECK_THROWS_AS(ObjectQuerySet(e, Tensor({2, 4})), std::invalid_argument);
}
