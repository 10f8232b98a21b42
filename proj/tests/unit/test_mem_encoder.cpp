#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stmmot/checks.hpp"
#include "stmmot/errors.hpp"
#include "stmmot/mem_encoder.hpp"

using namespace stmmot;

namespace {

std::vector<TrackState> random_window(std::size_t n, std::size_t d, Rng& rng) {
    std::vector<TrackState> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({random_normal({d}, 1.0, rng), {0.5, 0.5, 0.1, 0.1}, 0.9, i + 1, true});
    return out;
}

// Keys carry a sinusoidal age code: age 0 is the newest state.
Tensor age_code(std::size_t age, std::size_t d) {
    Tensor pe({d});
    for (std::size_t c = 0; c < d; ++c) {
        const double freq = std::pow(10000.0, -static_cast<double>(c - c % 2) / static_cast<double>(d));
        pe[c] = c % 2 == 0 ? std::sin(static_cast<double>(age) * freq) : std::cos(static_cast<double>(age) * freq);
    }
    return pe;
}

Tensor keys_of(const std::vector<TrackState>& w, double scale) {
    const std::size_t n = w.size(), d = w[0].embedding.size();
    Tensor k({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor pe = age_code(n - 1 - i, d);
        for (std::size_t c = 0; c < d; ++c) k(i, c) = w[i].embedding[c] + scale * pe[c];
    }
    return k;
}

Tensor values_of(const std::vector<TrackState>& w) {
    const std::size_t n = w.size(), d = w[0].embedding.size();
    Tensor v({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) v(i, c) = w[i].embedding[c];
    return v;
}

Tensor row(const Tensor& v) {
    Tensor r({1, v.size()});
    for (std::size_t c = 0; c < v.size(); ++c) r(0, c) = v[c];
    return r;
}

Tensor naive_ffn(const Ffn& f, const Tensor& z) {
    const std::size_t hidden = f.w1.dim(0), out = f.w2.dim(0), in = f.w1.dim(1);
    std::vector<double> h(hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
        double s = f.b1[j];
        for (std::size_t c = 0; c < in; ++c) s += f.w1(j, c) * z(0, c);
        h[j] = std::max(0.0, s);
    }
    Tensor y({out});
    for (std::size_t o = 0; o < out; ++o) {
        double s = f.b2[o];
        for (std::size_t j = 0; j < hidden; ++j) s += f.w2(o, j) * h[j];
        y[o] = s;
    }
    return y;
}

double vec_diff(const Tensor& a, const Tensor& b) { return max_abs_diff(a.reshaped({a.size()}), b.reshaped({b.size()})); }

EncoderBlocks random_blocks(std::size_t d, Rng& rng) {
    EncoderBlocks b = EncoderBlocks::random(d, 2, rng, 0.3);
    b.dmat_init = random_normal({d}, 1.0, rng);
    return b;
}

}  // namespace

TEST_CASE("short-term context of one state is that state") {
    Rng rng(1);
    const auto b = EncoderBlocks::identity(8, 10.0);
    const auto w = random_window(1, 8, rng);
    CHECK(vec_diff(encode_short(w, b), w[0].embedding) < 1e-15);
}

TEST_CASE("short-term context of repeated states is that state") {
    Rng rng(2);
    const auto b = EncoderBlocks::identity(8, 10.0);
    auto w = random_window(5, 8, rng);
    for (auto& s : w) s.embedding = w[0].embedding;
    CHECK(vec_diff(encode_short(w, b), w[0].embedding) < 1e-14);
}

TEST_CASE("short-term block matches a loop reference") {
    Rng rng(3);
    const auto b = random_blocks(8, rng);
    const auto w = random_window(5, 8, rng);
    const Tensor q = row(w.back().embedding + b.temporal_pe_scale * age_code(0, 8));
    const Tensor ref = checks::naive_attention(q, keys_of(w, b.temporal_pe_scale), values_of(w), b.short_attn);
    CHECK(vec_diff(encode_short(w, b), ref) <= 1e-12);
}

TEST_CASE("long-term context") {
    Rng rng(4);
    const auto id = EncoderBlocks::identity(8, 10.0);
    const auto one = random_window(1, 8, rng);
    CHECK(vec_diff(encode_long(Tensor({8}), one, id), one[0].embedding) < 1e-15);

    const auto b = random_blocks(8, rng);
    const auto w = random_window(25, 8, rng);
    const Tensor ref = checks::naive_attention(row(b.dmat_init), keys_of(w, b.temporal_pe_scale), values_of(w), b.long_attn);
    CHECK(vec_diff(encode_long(b.dmat_init, w, b), ref) <= 1e-12);
    CHECK_THROWS_AS(encode_long(b.dmat_init, {}, b), std::invalid_argument);
}

TEST_CASE("long-term context is a set function without age codes") {
    Rng rng(5);
    auto b = random_blocks(8, rng);
    b.temporal_pe_scale = 0.0;
    auto w = random_window(6, 8, rng);
    const Tensor before = encode_long(b.dmat_init, w, b);
    std::swap(w[1], w[4]);
    CHECK(vec_diff(encode_long(b.dmat_init, w, b), before) < 1e-12);
}

TEST_CASE("fusion") {
    Rng rng(6);
    const auto id = EncoderBlocks::identity(8, 10.0);
    const Tensor v = random_normal({8}, 1.0, rng);
    const FuseResult same = fuse(v, v, random_normal({8}, 1.0, rng), id);
    CHECK(vec_diff(same.tracklet, v) < 1e-14);
    CHECK(vec_diff(same.dmat, v) < 1e-14);

    const auto b = random_blocks(8, rng);
    const Tensor asc = random_normal({8}, 1.0, rng), alc = random_normal({8}, 1.0, rng);
    const FuseResult a = fuse(asc, alc, b.dmat_init, b), swapped = fuse(alc, asc, b.dmat_init, b);
    CHECK(vec_diff(a.tracklet, swapped.tracklet) < 1e-12);

    Tensor kv({2, 8});
    for (std::size_t c = 0; c < 8; ++c) {
        kv(0, c) = asc[c];
        kv(1, c) = alc[c];
    }
    const Tensor z = checks::naive_attention(row(b.dmat_init), kv, kv, b.fuse_attn);
    const Tensor heads = naive_ffn(b.fuse_ffn, z);
    for (std::size_t c = 0; c < 8; ++c) {
        CHECK(std::abs(a.tracklet[c] - heads[c]) <= 1e-12);
        CHECK(std::abs(a.dmat[c] - heads[8 + c]) <= 1e-12);
    }
}

TEST_CASE("encode_all") {
    Rng rng(7);
    const auto b = random_blocks(8, rng);
    MemoryBuffer buf(10, 30);
    CHECK(encode_all(buf, {}, b).ids.empty());

    buf.admit(1, random_window(1, 8, rng)[0]);
    buf.admit(2, random_window(1, 8, rng)[0]);
    for (std::size_t f = 2; f <= 8; ++f) {
        auto w = random_window(2, 8, rng);
        w[0].frame_index = w[1].frame_index = f;
        buf.append_frame(f, {{1, w[0]}, {2, w[1]}});
    }
    const std::map<TrackId, Tensor> dmats{{1, b.dmat_init}, {2, random_normal({8}, 1.0, rng)}};
    const EncodedTracks all = encode_all(buf, dmats, b);
    REQUIRE(all.ids == std::vector<TrackId>{1, 2});

    // single-track composition
    const Tensor asc = encode_short(buf.window(1, b.t_short), b);
    const Tensor alc = encode_long(dmats.at(1), buf.window(1, b.t_long), b);
    const FuseResult f1 = fuse(asc, alc, dmats.at(1), b);
    for (std::size_t c = 0; c < 8; ++c) CHECK(all.tracklets(0, c) == f1.tracklet[c]);
    CHECK(all.dmats.at(1) == f1.dmat);

    // perturbing track 2 leaves track 1 untouched
    MemoryBuffer other(10, 30);
    other.admit(1, buf.history(1).front());
    other.admit(2, random_window(1, 8, rng)[0]);
    for (std::size_t f = 2; f <= 8; ++f) {
        auto w = random_window(1, 8, rng)[0];
        w.frame_index = f;
        other.append_frame(f, {{1, buf.history(1)[f - 1]}, {2, w}});
    }
    const EncodedTracks again = encode_all(other, dmats, b);
    for (std::size_t c = 0; c < 8; ++c) CHECK(again.tracklets(0, c) == all.tracklets(0, c));
    CHECK(again.dmats.at(1) == all.dmats.at(1));

    CHECK_THROWS_AS(encode_all(buf, {{1, b.dmat_init}}, b), InvariantError);
}

TEST_CASE("pooling strategies") {
    Rng rng(8);
    auto b = EncoderBlocks::identity(4, 10.0);
    MemoryBuffer buf(2, 30);
    buf.admit(1, {Tensor::vector({1, -2, 3, 0}), {}, 1.0, 1, true});
    buf.append_frame(2, {{1, {Tensor::vector({3, 2, -1, 0}), {}, 1.0, 2, true}}});
    b.strategy = Aggregation::avg_pool;
    CHECK(encode_track(buf, 1, b.dmat_init, b).tracklet == Tensor::vector({2, 0, 1, 0}));
    b.strategy = Aggregation::max_pool;
    CHECK(encode_track(buf, 1, b.dmat_init, b).tracklet == Tensor::vector({3, 2, 3, 0}));
    CHECK(b.horizon() == b.t_short);
}

TEST_CASE("strategy names") {
    for (auto a : {Aggregation::ours, Aggregation::single, Aggregation::long_after_short, Aggregation::avg_pool,
                   Aggregation::max_pool})
        CHECK(parse_aggregation(to_string(a)) == a);
    CHECK(to_string(Aggregation::long_after_short) == "long-after-short");
    CHECK_THROWS_AS(parse_aggregation("mean"), std::invalid_argument);
}

TEST_CASE("encoder blocks round-trip through a store") {
    Rng rng(9);
    auto b = random_blocks(8, rng);
    ParamStore store;
    b.save(store);
    const auto c = EncoderBlocks::load(store);
    CHECK(c.temporal_pe_scale == b.temporal_pe_scale);
    CHECK(c.fuse_ffn.w2 == b.fuse_ffn.w2);
    CHECK(c.dmat_init == b.dmat_init);
}
