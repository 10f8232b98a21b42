#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "stmmot/checks.hpp"
#include "stmmot/losses.hpp"

using namespace stmmot;

namespace {

QueryEntry entry(QueryKind kind, Box b, double o, double u) { return {kind, -1, {}, b, o, u, o * u}; }

// Two candidates and one tracklet: one matched candidate, one background
// candidate, one visible tracklet.
struct Frame {
    std::vector<QueryEntry> entries;
    Supervision sup;
};

Frame sample_frame(double shift) {
    Frame f;
    f.entries = {entry(QueryKind::candidate, {0.4 + shift, 0.5, 0.2, 0.3}, 0.8, 0.7),
                 entry(QueryKind::candidate, {0.7, 0.2, 0.1, 0.1}, 0.3, 0.6),
                 entry(QueryKind::tracklet, {0.2, 0.3, 0.15, 0.1}, 0.6, 1.0)};
    f.sup.targets = {EntryTarget{1.0, 1.0, Box{0.45, 0.52, 0.22, 0.28}, 0}, EntryTarget{},
                     EntryTarget{1.0, std::nullopt, Box{0.21, 0.33, 0.14, 0.12}, 1}};
    f.sup.visible = 2;
    return f;
}

}  // namespace

TEST_CASE("focal loss") {
    CHECK(focal_loss(1.0 - 1e-7, 1, 0.25, 2.0).value < 1e-12);
    CHECK(std::abs(focal_loss(0.5, 1, 0.25, 2.0).value - 0.25 * 0.25 * std::log(2.0)) < 1e-15);
    CHECK(focal_loss(0.5, 1, 0.25, 2.0).value == doctest::Approx(0.043322).epsilon(1e-5));
    const double fd =
        checks::central_difference([](double p) { return focal_loss(p, 1, 0.25, 2.0).value; }, 0.5);
    CHECK(checks::relative_error(focal_loss(0.5, 1, 0.25, 2.0).grad, fd) < 1e-6);
    // negatives weigh with 1 - alpha
    CHECK(std::abs(focal_loss(0.5, 0, 0.25, 2.0).value - 0.75 * 0.25 * std::log(2.0)) < 1e-15);
    CHECK_THROWS_AS(focal_loss(0.5, 2, 0.25, 2.0), std::invalid_argument);
}

TEST_CASE("L1 box loss") {
    const Box b{0.3, 0.4, 0.2, 0.1};
    CHECK(l1_box_loss(b, b).value == 0.0);
    const BoxLoss l = l1_box_loss({0.4, 0.4, 0.2, 0.1}, b);
    CHECK(std::abs(l.value - 0.1) < 1e-15);
    CHECK(l.grad == std::array<double, 4>{1, 0, 0, 0});

    Rng rng(1);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    for (int i = 0; i < 20; ++i) {
        const Box p{u(rng), u(rng), u(rng), u(rng)}, g{u(rng), u(rng), u(rng), u(rng)};
        const double oracle = std::abs(p.cx - g.cx) + std::abs(p.cy - g.cy) + std::abs(p.w - g.w) + std::abs(p.h - g.h);
        CHECK(std::abs(l1_box_loss(p, g).value - oracle) < 1e-15);
    }
}

TEST_CASE("GIoU loss") {
    const Box b{0.3, 0.4, 0.2, 0.1};
    CHECK(std::abs(giou_loss(b, b).value) < 1e-15);
    const Box a = from_corners({0, 0, 2, 2}), c = from_corners({1, 1, 3, 3});
    CHECK(std::abs(giou(a, c) - (1.0 / 7.0 - 2.0 / 9.0)) < 1e-15);
    CHECK(giou_loss(a, c).value == doctest::Approx(1.079365).epsilon(1e-6));
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(2);
    const auto r = checks::loss_gradients(100, rng);
    CHECK_MESSAGE(r.passed, r.detail);
}

TEST_CASE("track loss") {
    const LossWeights w;
    const Frame f = sample_frame(0.0);
    const LossReport r = track_loss(f.entries, f.sup, w);

    // recomposed from the scalar losses
    double obj = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        obj += focal_loss(f.entries[i].objectness, static_cast<int>(f.sup.targets[i].objectness), w.focal_alpha,
                          w.focal_gamma)
                   .value;
    const double uni = focal_loss(0.7, 1, w.focal_alpha, w.focal_gamma).value;
    const double l1 = l1_box_loss(f.entries[0].box, *f.sup.targets[0].box).value +
                      l1_box_loss(f.entries[2].box, *f.sup.targets[2].box).value;
    const double gi = giou_loss(f.entries[0].box, *f.sup.targets[0].box).value +
                      giou_loss(f.entries[2].box, *f.sup.targets[2].box).value;
    CHECK(std::abs(r.obj - obj) < 1e-12);
    CHECK(std::abs(r.uni - uni) < 1e-12);
    CHECK(std::abs(r.total - (w.cls * (obj + uni) + w.l1 * l1 + w.l1 * gi) / 2.0) < 1e-12);

    LossWeights doubled = w;
    doubled.cls *= 2.0;
    const LossReport r2 = track_loss(f.entries, f.sup, doubled);
    CHECK(std::abs((r2.total - r.total) - w.cls * (r.obj + r.uni) / 2.0) < 1e-12);
}

TEST_CASE("perfect predictions cost nothing") {
    const Box b{0.4, 0.5, 0.2, 0.3};
    const std::vector<QueryEntry> entries{entry(QueryKind::candidate, b, 1.0, 1.0),
                                          entry(QueryKind::candidate, {0.1, 0.1, 0.1, 0.1}, 0.0, 0.5)};
    Supervision sup;
    sup.targets = {EntryTarget{1.0, 1.0, b, 0}, EntryTarget{}};
    sup.visible = 1;
    CHECK(track_loss(entries, sup, {}).total < 1e-10);
    CHECK(det_loss(entries, sup, {}).total < 1e-10);
}

TEST_CASE("detection loss") {
    const LossWeights w;
    const Frame f = sample_frame(0.0);
    const LossReport t = track_loss(f.entries, f.sup, w), d = det_loss(f.entries, f.sup, w);
    CHECK(d.uni == 0.0);
    const double expect = t.total - (w.cls * t.uni + w.l1 * t.iou) / 2.0 + w.iou * t.iou / 2.0;
    CHECK(std::abs(d.total - expect) < 1e-12);

    LossWeights zero = w;
    zero.cls = zero.l1 = zero.iou = 0.0;
    CHECK(det_loss(f.entries, f.sup, zero).total == 0.0);
}

TEST_CASE("sequence loss") {
    const LossWeights w;
    const Frame f = sample_frame(0.0);
    const LossReport t = track_loss(f.entries, f.sup, w), d = det_loss(f.entries, f.sup, w);
    CHECK(std::abs(seq_loss({t}, {d}, w) - (w.track * t.total + w.det * d.total)) < 1e-12);

    LossWeights no_det = w;
    no_det.det = 0.0;
    CHECK(seq_loss({t}, {d}, no_det) == w.track * t.total);
    LossWeights detached = w;
    detached.detach_aux = true;
    CHECK(seq_loss({t}, {d}, detached) == w.track * t.total);

    std::vector<LossReport> ts, ds;
    double raw = 0.0, det = 0.0;
    std::size_t visible = 0;
    for (double shift : {0.0, 0.02, -0.03}) {
        const Frame g = sample_frame(shift);
        ts.push_back(track_loss(g.entries, g.sup, w));
        ds.push_back(det_loss(g.entries, g.sup, w));
        raw += ts.back().raw;
        det += ds.back().total;
        visible += g.sup.visible;
    }
    CHECK(std::abs(seq_loss(ts, ds, w) - (w.track * raw / static_cast<double>(visible) + w.det * det)) < 1e-12);
    CHECK_THROWS_AS(seq_loss({}, {}, w), std::invalid_argument);
}

TEST_CASE("loss report serializes") {
    const Frame f = sample_frame(0.0);
    const auto j = to_json(track_loss(f.entries, f.sup, {}));
    CHECK(j.contains("total"));
    CHECK(j["visible"] == 2);
}

TEST_CASE("weights validate") {
    LossWeights w;
    w.focal_alpha = 1.5;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    w = {};
    w.cls = -1.0;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}
