#include <doctest.h>

#include <nlohmann/json.hpp>

#include "stmmot/checks.hpp"
#include "stmmot/errors.hpp"
#include "stmmot/memory.hpp"

using namespace stmmot;

namespace {

TrackState present(double v, std::size_t frame) {
    return {Tensor::vector({v, 1.0}), {0.5, 0.5, 0.1, 0.1}, 0.9, frame, true};
}

}  // namespace

TEST_CASE("admission evicts the oldest track at capacity") {
    MemoryBuffer buf(2, 5);
    CHECK_FALSE(buf.admit(1, present(1, 0)).has_value());
    CHECK(buf.size() == 1);
    CHECK_FALSE(buf.admit(2, present(2, 0)).has_value());
    const auto evicted = buf.admit(3, present(3, 0));
    REQUIRE(evicted.has_value());
    CHECK(*evicted == 1);
    CHECK(buf.track_ids() == std::vector<TrackId>{2, 3});
    CHECK_THROWS_AS(buf.admit(2, present(2, 0)), std::invalid_argument);
}

TEST_CASE("re-admitting an evicted id starts a fresh history") {
    MemoryBuffer buf(1, 5);
    buf.admit(1, present(1, 0));
    buf.append_frame(1, {{1, present(1, 1)}});
    buf.admit(2, present(2, 1));
    buf.admit(1, present(9, 1));
    CHECK(buf.history(1).size() == 1);
    CHECK(buf.history(1).front().embedding[0] == 9.0);
}

TEST_CASE("per-track horizon keeps the newest states") {
    MemoryBuffer buf(4, 3);
    buf.admit(1, present(0, 1));
    for (std::size_t f = 2; f <= 4; ++f) buf.append_frame(f, {{1, present(static_cast<double>(f), f)}});
    const auto& h = buf.history(1);
    REQUIRE(h.size() == 3);
    CHECK(h[0].frame_index == 2);
    CHECK(h[2].frame_index == 4);
}

TEST_CASE("omitted tracks are zero-padded") {
    MemoryBuffer buf(4, 5);
    buf.admit(1, present(1, 0));
    buf.admit(2, present(2, 0));
    buf.append_frame(1, {{1, present(1, 1)}});
    const TrackState& s = buf.history(2).back();
    CHECK_FALSE(s.present);
    CHECK(s.frame_index == 1);
    CHECK(l2_norm(s.embedding.data()) == 0.0);
    CHECK(s.embedding.size() == 2);
}

TEST_CASE("appending to an empty buffer is a no-op") {
    MemoryBuffer buf(4, 5);
    buf.append_frame(7, {});
    CHECK(buf.empty());
}

TEST_CASE("append rejects unknown tracks and gaps") {
    MemoryBuffer buf(4, 5);
    buf.admit(1, present(1, 0));
    CHECK_THROWS_AS(buf.append_frame(1, {{5, present(1, 1)}}), std::out_of_range);
    CHECK_THROWS_AS(buf.append_frame(2, {}), std::invalid_argument);
    CHECK(buf.history(1).size() == 1);
}

TEST_CASE("window returns a suffix") {
    MemoryBuffer buf(4, 30);
    buf.admit(1, present(1, 1));
    for (std::size_t f = 2; f <= 10; ++f) buf.append_frame(f, {{1, present(1, f)}});
    const auto w = buf.window(1, 5);
    REQUIRE(w.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(w[i].frame_index == 6 + i);
    CHECK(buf.window(1, 50).size() == 10);
    CHECK(buf.window(1, 0).empty());
}

TEST_CASE("window results are values") {
    MemoryBuffer buf(4, 30);
    buf.admit(1, present(1, 1));
    const auto w = buf.window(1, 3);
    MemoryBuffer copy = buf;
    copy.append_frame(2, {{1, present(5, 2)}});
    CHECK(w.size() == 1);
    CHECK(buf.window(1, 3).size() == 1);
    CHECK(copy.window(1, 3).size() == 2);
}

TEST_CASE("remove") {
    MemoryBuffer buf(4, 30);
    buf.admit(1, present(1, 1));
    buf.admit(2, present(2, 1));
    buf.append_frame(2, {{1, present(1, 2)}, {2, present(2, 2)}});
    const auto before = buf.window(2, 5);
    buf.remove(1);
    CHECK(buf.window(2, 5).size() == before.size());
    CHECK(buf.window(2, 5).back().embedding == before.back().embedding);
    CHECK_THROWS_AS(buf.window(1, 3), std::out_of_range);
    CHECK_THROWS_AS(buf.remove(1), std::out_of_range);
    buf.remove(2);
    CHECK(buf.empty());
}

TEST_CASE("random operation sequences keep the invariants") {
    Rng rng(11);
    const auto r = checks::buffer_invariants(2000, rng);
    CHECK_MESSAGE(r.passed, r.detail);
}

TEST_CASE("snapshot lists every track") {
    MemoryBuffer buf(4, 30);
    buf.admit(3, present(1, 1));
    const auto j = buf.snapshot();
    CHECK(j.contains("3"));
    CHECK(j["3"].size() == 1);
}

TEST_CASE("capacity must be positive") {
    CHECK_THROWS_AS(MemoryBuffer(0, 3), std::invalid_argument);
    CHECK_THROWS_AS(MemoryBuffer(3, 0), std::invalid_argument);
}
