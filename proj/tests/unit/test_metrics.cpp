#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "stmmot/checks.hpp"
#include "stmmot/metrics.hpp"

using namespace stmmot;

namespace {

AnnotationRow row(TrackId id, double left, double top = 0.0) { return {id, {left, top, 50.0, 50.0}, 1.0, {}}; }

// Two objects over five frames, far apart.
Sequence two_tracks() {
    Sequence s;
    for (std::size_t f = 1; f <= 5; ++f) s.push_back({f, {row(1, 0.0), row(2, 300.0)}});
    return s;
}

}  // namespace

TEST_CASE("identical sequences are error free") {
    const Sequence gt = two_tracks();
    const ClearResult c = match_frames(gt, gt);
    CHECK(c.totals.gt == 10);
    CHECK(c.totals.fp == 0);
    CHECK(c.totals.fn == 0);
    CHECK(c.totals.idsw == 0);
    CHECK(mota(c.totals) == 1.0);
    const MetricReport r = evaluate(gt, gt);
    CHECK(r.idf1 == 1.0);
    CHECK(r.hota == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.deta == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.assa == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("an id flip is one switch") {
    const Sequence gt = two_tracks();
    Sequence pred = gt;
    for (std::size_t f = 3; f < 5; ++f) pred[f].rows[0].id = 9;
    CHECK(match_frames(gt, pred).totals.idsw == 1);
}

TEST_CASE("a switch is counted when a track resumes under a new id after a gap") {
    const Sequence gt = two_tracks();
    Sequence pred = gt;
    pred[2].rows.erase(pred[2].rows.begin());
    for (std::size_t f = 3; f < 5; ++f) pred[f].rows[0].id = 9;
    const ClearCounts c = match_frames(gt, pred).totals;
    CHECK(c.idsw == 1);
    CHECK(c.fn == 1);
}

TEST_CASE("MOTA arithmetic") {
    CHECK(mota({10, 0, 0, 0, 10}) == 1.0);
    CHECK(mota({10, 1, 2, 1, 7}) == 0.6);
    const ClearCounts missed = match_frames(two_tracks(), {}).totals;
    CHECK(missed.fn == 10);
    CHECK(mota(missed) == 0.0);
    CHECK_THROWS_AS(mota({}), std::invalid_argument);
}

TEST_CASE("IDF1 of a partially covered track") {
    const Sequence gt = two_tracks();
    Sequence pred;
    for (std::size_t f = 1; f <= 5; ++f) {
        FrameAnnotations fa{f, {row(11, 0.0)}};
        if (f <= 3) fa.rows.push_back(row(12, 300.0));
        pred.push_back(fa);
    }
    const IdentityScores s = idf1(gt, pred);
    CHECK(s.idtp == 8);
    CHECK(s.idfn == 2);
    CHECK(s.idfp == 0);
    CHECK(std::abs(s.idf1 - 16.0 / 18.0) < 1e-15);
    CHECK(idf1(gt, {}).idf1 == 0.0);
    CHECK(idf1(gt, gt).idf1 == 1.0);
}

TEST_CASE("IDF1 mapping equals brute force") {
    Rng rng(1);
    const auto r = checks::idf1_oracle(100, rng);
    CHECK_MESSAGE(r.passed, r.detail);
}

TEST_CASE("HOTA of a split track") {
    const Sequence gt{{1, {row(1, 10.0)}}, {2, {row(1, 10.0)}}};
    const Sequence pred{{1, {row(5, 10.0)}}, {2, {row(6, 10.0)}}};
    const HotaScores h = hota(gt, pred);
    CHECK(std::abs(h.deta - 1.0) < 1e-12);
    CHECK(std::abs(h.assa - 0.5) < 1e-12);
    CHECK(std::abs(h.hota - std::sqrt(0.5)) < 1e-9);
    CHECK(hota(gt, {}).hota == 0.0);
}

TEST_CASE("per-frame matching equals brute force on 3x3 frames") {
    Rng rng(2);
    std::uniform_real_distribution<double> jitter(-12.0, 12.0);
    for (int trial = 0; trial < 50; ++trial) {
        FrameAnnotations g{1, {}}, p{1, {}};
        for (TrackId i = 0; i < 3; ++i) {
            g.rows.push_back({i + 1, {60.0 * static_cast<double>(i), 0.0, 50.0, 50.0}, 1.0, {}});
            p.rows.push_back({i + 11, {60.0 * static_cast<double>(i) + jitter(rng) + 30.0 * (trial % 2), jitter(rng), 50.0, 50.0}, 1.0, {}});
        }
        // minimum-cost matching over 1 - IoU, pairs below the threshold forbidden
        Tensor cost({3, 3});
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                const double v = iou(g.rows[i].box, p.rows[j].box);
                cost(i, j) = v >= 0.5 ? 1.0 - v : 1e6;
            }
        const double best = checks::brute_force_min_cost(cost);
        const std::size_t expect_matches = static_cast<std::size_t>(3 - static_cast<int>(best / 1e6 + 0.5));
        const ClearResult c = match_frames({g}, {p});
        CHECK(c.totals.matches == expect_matches);
    }
}

TEST_CASE("metrics are invariant to prediction relabeling") {
    Rng rng(3);
    const auto r = checks::metric_arithmetic(100, rng);
    CHECK_MESSAGE(r.passed, r.detail);
}

TEST_CASE("prediction frames outside the ground truth are rejected") {
    const Sequence gt = two_tracks();
    Sequence pred = gt;
    pred.push_back({8, {row(1, 0.0)}});
    try {
        evaluate(gt, pred);
        FAIL("expected an alignment error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("frame 8") != std::string::npos);
    }
}

TEST_CASE("scores stay in range") {
    Rng rng(4);
    const Sequence gt = two_tracks();
    Sequence pred = gt;
    std::uniform_real_distribution<double> shift(-40.0, 40.0);
    for (auto& f : pred)
        for (auto& r : f.rows) r.box.left += shift(rng);
    const MetricReport r = evaluate(gt, pred);
    for (double v : {r.idf1, r.hota, r.deta, r.assa}) CHECK((v >= 0.0 && v <= 1.0));
    CHECK(r.mota <= 1.0);
}

TEST_CASE("report serialization") {
    const MetricReport r = evaluate(two_tracks(), two_tracks());
    const auto j = to_json(r);
    for (const char* k : {"MOTA", "IDF1", "HOTA", "DetA", "AssA", "GT", "FP", "FN", "IDSW"}) CHECK(j.contains(k));
    const auto [header, values] = to_csv(r);
    CHECK(header.rfind("MOTA,IDF1,HOTA", 0) == 0);
    CHECK(std::count(header.begin(), header.end(), ',') == std::count(values.begin(), values.end(), ','));
}
