#include "stmmot/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "stmmot/errors.hpp"

namespace stmmot {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Smooth max/min pieces pick a side at ties; either side is a valid subgradient.
struct Side {
    double value;
    bool first;
};
Side pick_max(double a, double b) { return a >= b ? Side{a, true} : Side{b, false}; }
Side pick_min(double a, double b) { return a <= b ? Side{a, true} : Side{b, false}; }

LossReport compose(const std::vector<QueryEntry>& entries, const Supervision& sup, const LossWeights& w,
                   bool with_uniqueness, double iou_weight, const char* op) {
    w.validate();
    if (sup.targets.size() != entries.size()) {
        throw std::invalid_argument(std::string(op) + ": " + std::to_string(entries.size()) + " entries but " +
                                    std::to_string(sup.targets.size()) + " targets");
    }
    LossReport r;
    r.visible = sup.visible;
    r.grads.resize(entries.size());
    bool any_box = false;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const auto& t = sup.targets[i];
        auto& g = r.grads[i];

        const ScalarLoss lo = focal_loss(clamp_prob(e.objectness), t.objectness >= 0.5 ? 1 : 0, w.focal_alpha, w.focal_gamma);
        r.obj += lo.value;
        g.objectness = w.cls * lo.grad;

        if (with_uniqueness && e.kind == QueryKind::candidate && t.uniqueness) {
            const ScalarLoss lu = focal_loss(clamp_prob(e.uniqueness), *t.uniqueness >= 0.5 ? 1 : 0, w.focal_alpha,
                                             w.focal_gamma);
            r.uni += lu.value;
            g.uniqueness = w.cls * lu.grad;
        }
        if (t.box) {
            any_box = true;
            const BoxLoss l1 = l1_box_loss(e.box, *t.box);
            const BoxLoss gi = giou_loss(e.box, *t.box);
            r.bbox += l1.value;
            r.iou += gi.value;
            for (std::size_t c = 0; c < 4; ++c) g.box[c] = w.l1 * l1.grad[c] + iou_weight * gi.grad[c];
        }
    }
    if (any_box && sup.visible == 0) {
        throw InvariantError(std::string(op) + ": box targets present but no visible instances");
    }
    r.raw = w.cls * (r.obj + r.uni) + w.l1 * r.bbox + iou_weight * r.iou;
    const double n = static_cast<double>(std::max<std::size_t>(sup.visible, 1));
    r.total = r.raw / n;
    for (auto& g : r.grads) {
        g.objectness /= n;
        g.uniqueness /= n;
        for (double& b : g.box) b /= n;
    }
    return r;
}

}  // namespace

void LossWeights::validate() const {
    for (double v : {cls, l1, iou, track, det, focal_alpha, focal_gamma}) {
        if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("LossWeights: weights must be finite and >= 0");
    }
    if (focal_alpha > 1.0) throw std::invalid_argument("LossWeights: focal alpha must lie in [0, 1]");
}

ScalarLoss focal_loss(double p, int y, double alpha, double gamma) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("focal_loss: p must lie strictly inside (0, 1)");
    if (y != 0 && y != 1) throw std::invalid_argument("focal_loss: label must be 0 or 1");
    if (y == 1) {
        const double q = 1.0 - p, lp = std::log(p);
        const double qg = std::pow(q, gamma);
        const double dqg = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0);
        return {-alpha * qg * lp, alpha * (dqg * lp - qg / p)};
    }
    const double q = 1.0 - p, lq = std::log(q);
    const double pg = std::pow(p, gamma);
    const double dpg = gamma == 0.0 ? 0.0 : gamma * std::pow(p, gamma - 1.0);
    return {-(1.0 - alpha) * pg * lq, -(1.0 - alpha) * (dpg * lq - pg / q)};
}

BoxLoss l1_box_loss(const Box& pred, const Box& gt) {
    const auto p = pred.as_array(), g = gt.as_array();
    BoxLoss r;
    for (std::size_t c = 0; c < 4; ++c) {
        r.value += std::abs(p[c] - g[c]);
        r.grad[c] = sign(p[c] - g[c]);
    }
    return r;
}

BoxLoss giou_loss(const Box& pred, const Box& gt) {
    if (pred.w < 0.0 || pred.h < 0.0 || gt.w < 0.0 || gt.h < 0.0) {
        throw std::invalid_argument("giou_loss: negative box extent");
    }
    const Corners a = to_corners(pred), b = to_corners(gt);
    const double area_a = pred.w * pred.h, area_b = gt.w * gt.h;

    const Side ix1 = pick_max(a.x1, b.x1), iy1 = pick_max(a.y1, b.y1);
    const Side ix2 = pick_min(a.x2, b.x2), iy2 = pick_min(a.y2, b.y2);
    const double iw_raw = ix2.value - ix1.value, ih_raw = iy2.value - iy1.value;
    const double iw = std::max(iw_raw, 0.0), ih = std::max(ih_raw, 0.0);
    const double inter = iw * ih;
    const double uni = area_a + area_b - inter;

    const Side cx1 = pick_min(a.x1, b.x1), cy1 = pick_min(a.y1, b.y1);
    const Side cx2 = pick_max(a.x2, b.x2), cy2 = pick_max(a.y2, b.y2);
    const double cw = cx2.value - cx1.value, ch = cy2.value - cy1.value;
    const double enc = cw * ch;

    if (!(uni > 0.0) || !(enc > 0.0)) return {1.0, {}};

    const double iou_v = inter / uni;
    BoxLoss r;
    r.value = 1.0 - (iou_v - (enc - uni) / enc);

    // d loss / d corners of the prediction, accumulated through inter, union and enclosure.
    // loss = 1 - inter/uni + 1 - uni/enc
    const double dl_dinter = -1.0 / uni;
    const double dl_duni = inter / (uni * uni) - 1.0 / enc;
    const double dl_denc = uni / (enc * enc);
    const double dl_dinter_total = dl_dinter - dl_duni;  // union = areas - inter

    double gx1 = 0.0, gy1 = 0.0, gx2 = 0.0, gy2 = 0.0;
    // area of the prediction: (x2 - x1)(y2 - y1)
    gx1 += dl_duni * -(a.y2 - a.y1);
    gx2 += dl_duni * (a.y2 - a.y1);
    gy1 += dl_duni * -(a.x2 - a.x1);
    gy2 += dl_duni * (a.x2 - a.x1);
    // intersection, only where it is open
    if (iw_raw > 0.0 && ih_raw > 0.0) {
        const double di_diw = ih * dl_dinter_total, di_dih = iw * dl_dinter_total;
        if (ix2.first) gx2 += di_diw;
        if (ix1.first) gx1 -= di_diw;
        if (iy2.first) gy2 += di_dih;
        if (iy1.first) gy1 -= di_dih;
    }
    // enclosure
    const double de_dcw = ch * dl_denc, de_dch = cw * dl_denc;
    if (cx2.first) gx2 += de_dcw;
    if (cx1.first) gx1 -= de_dcw;
    if (cy2.first) gy2 += de_dch;
    if (cy1.first) gy1 -= de_dch;

    // x1 = cx - w/2, x2 = cx + w/2 (same for y)
    r.grad = {gx1 + gx2, gy1 + gy2, 0.5 * (gx2 - gx1), 0.5 * (gy2 - gy1)};
    return r;
}

LossReport track_loss(const std::vector<QueryEntry>& entries, const Supervision& sup, const LossWeights& w) {
    return compose(entries, sup, w, true, w.l1, "track_loss");
}

LossReport det_loss(const std::vector<QueryEntry>& entries, const Supervision& sup, const LossWeights& w) {
    return compose(entries, sup, w, false, w.iou, "det_loss");
}

double seq_loss(const std::vector<LossReport>& track, const std::vector<LossReport>& det, const LossWeights& w) {
    w.validate();
    if (track.empty()) throw std::invalid_argument("seq_loss: empty sequence");
    if (track.size() != det.size()) throw std::invalid_argument("seq_loss: track and det sequences differ in length");
    double raw = 0.0, det_sum = 0.0;
    std::size_t visible = 0;
    for (const auto& r : track) {
        raw += r.raw;
        visible += r.visible;
    }
    for (const auto& r : det) det_sum += r.total;
    return w.track * raw / static_cast<double>(std::max<std::size_t>(visible, 1)) + w.effective_det() * det_sum;
}

nlohmann::json to_json(const LossReport& r) {
    return {{"obj", r.obj},   {"uni", r.uni},         {"bbox", r.bbox},       {"iou", r.iou},
            {"raw", r.raw},   {"total", r.total},     {"visible", r.visible}};
}

}  // namespace stmmot
