#include "stmmot/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "stmmot/cpn.hpp"
#include "stmmot/errors.hpp"
#include "stmmot/hungarian.hpp"
#include "stmmot/losses.hpp"
#include "stmmot/memory.hpp"
#include "stmmot/metrics.hpp"
#include "stmmot/spatial.hpp"
#include "stmmot/svp.hpp"
#include "stmmot/tracker.hpp"

namespace stmmot::checks {

namespace {

using Clock = std::chrono::steady_clock;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void finish(CheckResult& r, Clock::time_point start) {
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (r.detail.empty()) r.passed = r.worst <= r.tolerance;
}

void fail(CheckResult& r, const std::string& why) {
    if (r.detail.empty()) r.detail = why;
    r.passed = false;
}

Box random_box(Rng& rng) {
    return {uniform(rng, 0.25, 0.75), uniform(rng, 0.25, 0.75), uniform(rng, 0.05, 0.4), uniform(rng, 0.05, 0.4)};
}

// Keeps every coordinate and every same-axis corner pair at least `gap` apart,
// so central differences never straddle a kink of |.|, min or max.
bool well_separated(const Box& a, const Box& b, double gap = 1e-3) {
    const auto pa = a.as_array(), pb = b.as_array();
    for (std::size_t c = 0; c < 4; ++c)
        if (std::abs(pa[c] - pb[c]) < gap) return false;
    const Corners ca = to_corners(a), cb = to_corners(b);
    for (double u : {ca.x1, ca.x2})
        for (double v : {cb.x1, cb.x2})
            if (std::abs(u - v) < gap) return false;
    for (double u : {ca.y1, ca.y2})
        for (double v : {cb.y1, cb.y2})
            if (std::abs(u - v) < gap) return false;
    return true;
}

std::pair<Box, Box> random_box_pair(Rng& rng) {
    for (;;) {
        Box a = random_box(rng), b = random_box(rng);
        if (well_separated(a, b)) return {a, b};
    }
}

Box with_coord(Box b, std::size_t c, double v) {
    auto a = b.as_array();
    a[c] = v;
    return Box::from_array(a);
}

double pixel_iou(const PixelBox& a, const PixelBox& b) {
    const double x1 = std::max(a.left, b.left), y1 = std::max(a.top, b.top);
    const double x2 = std::min(a.left + a.width, b.left + b.width), y2 = std::min(a.top + a.height, b.top + b.height);
    const double inter = std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1);
    const double uni = a.width * a.height + b.width * b.height - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

// Small scene on a coarse grid so boxes either overlap well or not at all.
std::pair<Sequence, Sequence> random_id_scene(Rng& rng, std::size_t max_ids, std::size_t frames) {
    const std::size_t ng = pick(rng, 1, max_ids), np = pick(rng, 1, max_ids);
    auto slot_box = [&](std::size_t slot) {
        return PixelBox{100.0 * static_cast<double>(slot) + uniform(rng, 0.0, 8.0), uniform(rng, 0.0, 8.0), 50.0, 50.0};
    };
    Sequence gt, pred;
    for (std::size_t f = 1; f <= frames; ++f) {
        FrameAnnotations g{f, {}}, p{f, {}};
        std::vector<std::size_t> slots(6);
        std::iota(slots.begin(), slots.end(), std::size_t{0});
        std::shuffle(slots.begin(), slots.end(), rng);
        for (std::size_t i = 0; i < ng; ++i)
            if (uniform(rng, 0.0, 1.0) < 0.75 || (i == 0 && (f == 1 || f == frames))) g.rows.push_back({static_cast<TrackId>(i + 1), slot_box(slots[i]), 1.0, {}});
        for (std::size_t j = 0; j < np; ++j)
            if (uniform(rng, 0.0, 1.0) < 0.75)
                p.rows.push_back({static_cast<TrackId>(j + 11), slot_box(slots[pick(rng, 0, 5)]), 1.0, {}});
        if (!g.rows.empty()) gt.push_back(std::move(g));
        if (!p.rows.empty()) pred.push_back(std::move(p));
    }
    return {gt, pred};
}

double max_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double box_diff(const Box& a, const Box& b) {
    const auto pa = a.as_array(), pb = b.as_array();
    return max_diff(pa, pb);
}

}  // namespace

nlohmann::json to_json(const CheckResult& r) {
    return {{"name", r.name},       {"passed", r.passed},   {"trials", r.trials}, {"worst", r.worst},
            {"tolerance", r.tolerance}, {"seconds", r.seconds}, {"detail", r.detail}};
}

// ---- references ----

Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionParams& params) {
    const std::size_t d = params.d_model, heads = params.n_heads, hd = d / heads;
    const std::size_t nq = q.dim(0), nk = k.dim(0);
    const double scale = params.logit_scale > 0.0 ? params.logit_scale : 1.0 / std::sqrt(static_cast<double>(hd));
    auto project = [&](const Tensor& x, const Tensor& w) {
        std::vector<std::vector<double>> out(x.dim(0), std::vector<double>(d, 0.0));
        for (std::size_t i = 0; i < x.dim(0); ++i)
            for (std::size_t o = 0; o < d; ++o)
                for (std::size_t c = 0; c < d; ++c) out[i][o] += x(i, c) * w(o, c);
        return out;
    };
    const auto qp = project(q, params.w_q), kp = project(k, params.w_k), vp = project(v, params.w_v);
    std::vector<std::vector<double>> mixed(nq, std::vector<double>(d, 0.0));
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < nq; ++i) {
            std::vector<double> logit(nk);
            double top = params.sink_logits.empty() ? -INFINITY : params.sink_logits[h];
            for (std::size_t j = 0; j < nk; ++j) {
                double s = 0.0;
                for (std::size_t c = h * hd; c < (h + 1) * hd; ++c) s += qp[i][c] * kp[j][c];
                logit[j] = scale * s;
                top = std::max(top, logit[j]);
            }
            double z = params.sink_logits.empty() ? 0.0 : std::exp(params.sink_logits[h] - top);
            for (std::size_t j = 0; j < nk; ++j) z += std::exp(logit[j] - top);
            for (std::size_t j = 0; j < nk; ++j) {
                const double a = std::exp(logit[j] - top) / z;
                for (std::size_t c = h * hd; c < (h + 1) * hd; ++c) mixed[i][c] += a * vp[j][c];
            }
        }
    }
    Tensor out({nq, d});
    for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t o = 0; o < d; ++o)
            for (std::size_t c = 0; c < d; ++c) out(i, o) += mixed[i][c] * params.w_o(o, c);
    return out;
}

Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const std::size_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
    Tensor out({K, Ho, Wo});
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                double s = b[k];
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < kh; ++i)
                        for (std::size_t j = 0; j < kw; ++j) {
                            const long y = static_cast<long>(oy * stride + i) - static_cast<long>(pad);
                            const long xx = static_cast<long>(ox * stride + j) - static_cast<long>(pad);
                            if (y < 0 || xx < 0 || y >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
                            s += w(k, c, i, j) * x(c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx));
                        }
                out(k, oy, ox) = s;
            }
    return out;
}

double brute_force_min_cost(const Tensor& cost) {
    const bool flip = cost.dim(0) > cost.dim(1);
    const Tensor c = flip ? transpose(cost) : cost;
    const std::size_t n = c.dim(0), m = c.dim(1);
    std::vector<std::size_t> cols(m);
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    double best = INFINITY;
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += c(i, cols[i]);
        best = std::min(best, s);
    } while (std::next_permutation(cols.begin(), cols.end()));
    return best;
}

double brute_force_max_weight(const Tensor& weight) {
    const std::size_t n = weight.dim(0), m = weight.dim(1);
    std::vector<bool> used(m, false);
    std::function<double(std::size_t)> go = [&](std::size_t i) -> double {
        if (i == n) return 0.0;
        double best = go(i + 1);  // row i unmapped
        for (std::size_t j = 0; j < m; ++j) {
            if (used[j]) continue;
            used[j] = true;
            best = std::max(best, weight(i, j) + go(i + 1));
            used[j] = false;
        }
        return best;
    };
    return go(0);
}

double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// ---- suites ----

CheckResult loss_gradients(std::size_t points, Rng& rng, double tolerance) {
    const auto start = Clock::now();
    CheckResult r{"loss-gradients", false, 0, 0.0, tolerance, 0.0, {}};
    std::map<std::string, double> worst_by;
    auto note = [&](const char* what, double a, double n) {
        const double e = relative_error(a, n);
        worst_by[what] = std::max(worst_by[what], e);
        r.worst = std::max(r.worst, e);
    };

    for (std::size_t k = 0; k < points; ++k) {
        for (int y : {1, 0}) {
            const double p = uniform(rng, 0.02, 0.98), alpha = uniform(rng, 0.05, 1.0), gamma = uniform(rng, 0.0, 4.0);
            const double a = focal_loss(p, y, alpha, gamma).grad;
            const double n = central_difference([&](double x) { return focal_loss(x, y, alpha, gamma).value; }, p);
            note(y == 1 ? "focal(y=1)" : "focal(y=0)", a, n);
        }
        ++r.trials;
    }
    for (std::size_t k = 0; k < points; ++k) {
        const auto [pred, gt] = random_box_pair(rng);
        const BoxLoss l1 = l1_box_loss(pred, gt), gi = giou_loss(pred, gt);
        for (std::size_t c = 0; c < 4; ++c) {
            const double x = pred.as_array()[c];
            note("l1", l1.grad[c],
                 central_difference([&](double v) { return l1_box_loss(with_coord(pred, c, v), gt).value; }, x));
            note("giou", gi.grad[c],
                 central_difference([&](double v) { return giou_loss(with_coord(pred, c, v), gt).value; }, x));
        }
        r.trials += 2;
    }
    for (bool det : {false, true}) {
        for (std::size_t k = 0; k < points; ++k) {
            const std::size_t nc = pick(rng, 1, 3), nt = pick(rng, 0, 2);
            std::vector<QueryEntry> entries;
            Supervision sup;
            for (std::size_t i = 0; i < nc + nt; ++i) {
                QueryEntry e;
                e.kind = i < nc ? QueryKind::candidate : QueryKind::tracklet;
                e.objectness = uniform(rng, 0.05, 0.95);
                e.uniqueness = i < nc ? uniform(rng, 0.05, 0.95) : 1.0;
                EntryTarget t;
                t.objectness = pick(rng, 0, 1);
                if (i < nc && pick(rng, 0, 1)) t.uniqueness = static_cast<double>(pick(rng, 0, 1));
                if (pick(rng, 0, 1)) {
                    const auto [p, g] = random_box_pair(rng);
                    e.box = p;
                    t.box = g;
                } else {
                    e.box = random_box(rng);
                }
                entries.push_back(e);
                sup.targets.push_back(t);
            }
            sup.visible = pick(rng, 1, 4);
            LossWeights w;
            w.cls = uniform(rng, 0.5, 4.0);
            w.l1 = uniform(rng, 0.5, 8.0);
            w.iou = uniform(rng, 0.5, 4.0);
            auto total = [&](const std::vector<QueryEntry>& es) {
                return (det ? det_loss(es, sup, w) : track_loss(es, sup, w)).total;
            };
            const LossReport rep = det ? det_loss(entries, sup, w) : track_loss(entries, sup, w);
            const char* label = det ? "det_loss" : "track_loss";
            for (std::size_t i = 0; i < entries.size(); ++i) {
                auto perturbed = [&](auto setter) {
                    return [&, setter](double v) {
                        auto es = entries;
                        setter(es[i], v);
                        return total(es);
                    };
                };
                note(label, rep.grads[i].objectness,
                     central_difference(perturbed([](QueryEntry& e, double v) { e.objectness = v; }), entries[i].objectness));
                if (entries[i].kind == QueryKind::candidate) {
                    note(label, rep.grads[i].uniqueness,
                         central_difference(perturbed([](QueryEntry& e, double v) { e.uniqueness = v; }),
                                            entries[i].uniqueness));
                }
                for (std::size_t c = 0; c < 4; ++c) {
                    note(label, rep.grads[i].box[c],
                         central_difference(perturbed([c](QueryEntry& e, double v) { e.box = with_coord(e.box, c, v); }),
                                            entries[i].box.as_array()[c]));
                }
            }
            ++r.trials;
        }
    }
    std::ostringstream ss;
    for (const auto& [name, e] : worst_by) ss << name << "=" << e << " ";
    finish(r, start);
    if (!r.passed) r.detail = "worst relative errors: " + ss.str();
    return r;
}

CheckResult attention_conv_oracle(std::size_t instances, Rng& rng, double tolerance) {
    const auto start = Clock::now();
    CheckResult r{"attention-conv-oracle", false, 0, 0.0, tolerance, 0.0, {}};
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t d = std::vector<std::size_t>{4, 8, 16}[pick(rng, 0, 2)];
        std::vector<std::size_t> heads_opts;
        for (std::size_t h : {1, 2, 4})
            if (d % h == 0) heads_opts.push_back(h);
        const std::size_t heads = heads_opts[pick(rng, 0, heads_opts.size() - 1)];
        AttentionParams p = random_attention(d, heads, rng, 0.5);
        if (pick(rng, 0, 1)) p.logit_scale = uniform(rng, 0.1, 2.0);
        if (pick(rng, 0, 3) == 0) {
            p.sink_logits.clear();
            for (std::size_t h = 0; h < heads; ++h) p.sink_logits.push_back(uniform(rng, -2.0, 2.0));
        }
        const std::size_t nq = pick(rng, 1, 8), nk = pick(rng, 1, 16);
        const Tensor q = random_normal({nq, d}, 1.0, rng), k = random_normal({nk, d}, 1.0, rng),
                     v = random_normal({nk, d}, 1.0, rng);
        r.worst = std::max(r.worst, max_abs_diff(attend(q, k, v, p), naive_attention(q, k, v, p)));
        ++r.trials;

        const std::size_t C = pick(rng, 1, 8), H = pick(rng, 1, 16), W = pick(rng, 1, 16), K = pick(rng, 1, 8);
        const std::size_t stride = pick(rng, 1, 2), pad = pick(rng, 0, 2);
        std::size_t kh = 2 * pick(rng, 0, 2) + 1, kw = 2 * pick(rng, 0, 2) + 1;
        kh = std::min(kh, H + 2 * pad);
        kw = std::min(kw, W + 2 * pad);
        const Tensor x = random_normal({C, H, W}, 1.0, rng), w = random_normal({K, C, kh, kw}, 1.0, rng),
                     b = random_normal({K}, 1.0, rng);
        r.worst = std::max(r.worst, max_abs_diff(conv2d(x, w, b, stride, pad), naive_conv2d(x, w, b, stride, pad)));
        ++r.trials;
    }
    finish(r, start);
    return r;
}

CheckResult deformable_degeneration(std::size_t instances, Rng& rng, double tolerance) {
    const auto start = Clock::now();
    CheckResult r{"deformable-degeneration", false, 0, 0.0, tolerance, 0.0, {}};
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t C = pick(rng, 1, 4), H = pick(rng, 3, 10), W = pick(rng, 3, 10);
        const Tensor x = random_normal({C, H, W}, 1.0, rng);
        const Tensor w = random_normal({C, C, 3, 3}, 1.0, rng), b = random_normal({C}, 1.0, rng);
        const Tensor zero({2 * PftlParams::taps, H, W});
        const Tensor deformed = deformable_conv(x, zero, w, b);
        r.worst = std::max({r.worst, max_abs_diff(deformed, conv2d(x, w, b, 1, 1)),
                            max_abs_diff(deformed, naive_conv2d(x, w, b, 1, 1))});

        PftlParams p = PftlParams::random(C, rng, 0.5);
        p.residual_w = Tensor(p.residual_w.shape());
        p.residual_b = Tensor(p.residual_b.shape());
        const Tensor x0 = random_normal({C, H, W}, 1.0, rng);
        if (!(pftl_forward(x0, x, p) == x0)) fail(r, "zero residual weights did not reproduce x0 exactly");
        ++r.trials;
    }
    finish(r, start);
    return r;
}

CheckResult buffer_invariants(std::size_t operations, Rng& rng) {
    const auto start = Clock::now();
    CheckResult r{"buffer-invariants", false, 0, 0.0, 0.0, 0.0, {}};
    constexpr std::size_t n_max = 4, t_max = 6, d = 3;
    constexpr TrackId id_space = 12;
    MemoryBuffer buf(n_max, t_max);
    std::deque<TrackId> order;
    std::map<TrackId, std::deque<std::pair<std::size_t, bool>>> shadow;
    std::size_t frame = 0;

    auto present_state = [&](std::size_t f) {
        Tensor e = random_normal({d}, 1.0, rng);
        e[0] += 5.0;  // never all-zero
        return TrackState{e, random_box(rng), uniform(rng, 0.0, 1.0), f, true};
    };
    auto verify = [&](std::size_t op) {
        try {
            buf.check_invariants();
        } catch (const InvariantError& e) {
            fail(r, "op " + std::to_string(op) + ": " + e.what());
        }
        if (buf.size() > n_max) fail(r, "track count above N_max");
        if (!std::equal(order.begin(), order.end(), buf.track_ids().begin(), buf.track_ids().end())) {
            fail(r, "op " + std::to_string(op) + ": admission order diverged from FIFO");
        }
        for (TrackId id : order) {
            const auto& h = buf.history(id);
            const auto& s = shadow.at(id);
            if (h.size() > t_max) fail(r, "queue longer than T_max");
            if (h.size() != s.size()) {
                fail(r, "op " + std::to_string(op) + ": history length diverged");
                continue;
            }
            for (std::size_t i = 0; i < h.size(); ++i) {
                if (h[i].frame_index != s[i].first || h[i].present != s[i].second) fail(r, "history order diverged");
                if (!h[i].present && l2_norm(h[i].embedding.data()) != 0.0) fail(r, "absent state not zero-padded");
            }
        }
    };

    for (std::size_t op = 0; op < operations && r.detail.empty(); ++op) {
        const TrackId id = static_cast<TrackId>(pick(rng, 0, id_space - 1));
        switch (pick(rng, 0, 5)) {
            case 0: {  // admit
                const bool known = shadow.contains(id);
                try {
                    const auto evicted = buf.admit(id, present_state(frame));
                    if (known) fail(r, "duplicate admit accepted");
                    std::optional<TrackId> expect;
                    if (order.size() == n_max) {
                        expect = order.front();
                        shadow.erase(order.front());
                        order.pop_front();
                    }
                    if (evicted != expect) fail(r, "evicted the wrong track");
                    order.push_back(id);
                    shadow[id] = {{frame, true}};
                } catch (const std::invalid_argument&) {
                    if (!known) fail(r, "fresh admit rejected");
                }
                break;
            }
            case 1:
            case 2: {  // append
                ++frame;
                std::map<TrackId, TrackState> states;
                for (TrackId t : order) {
                    const std::size_t roll = pick(rng, 0, 9);
                    if (roll < 5) states.emplace(t, present_state(frame));
                    else if (roll == 5) states.emplace(t, make_absent(d, frame));
                }
                buf.append_frame(frame, states);
                for (TrackId t : order) {
                    auto& q = shadow.at(t);
                    const auto it = states.find(t);
                    q.emplace_back(frame, it != states.end() && it->second.present);
                    while (q.size() > t_max) q.pop_front();
                }
                break;
            }
            case 3: {  // remove
                const bool known = shadow.contains(id);
                try {
                    buf.remove(id);
                    if (!known) fail(r, "remove of unknown track accepted");
                    shadow.erase(id);
                    order.erase(std::find(order.begin(), order.end(), id));
                } catch (const std::out_of_range&) {
                    if (known) fail(r, "remove of live track rejected");
                }
                break;
            }
            case 4: {  // window, plus value semantics on a copy
                if (order.empty()) break;
                const TrackId t = order[pick(rng, 0, order.size() - 1)];
                const std::size_t T = pick(rng, 1, t_max + 2);
                const auto win = buf.window(t, T);
                const auto& s = shadow.at(t);
                if (win.size() != std::min(T, s.size())) fail(r, "window length wrong");
                for (std::size_t i = 0; i < win.size(); ++i)
                    if (win[i].frame_index != s[s.size() - win.size() + i].first) fail(r, "window is not the newest suffix");
                MemoryBuffer copy = buf;
                copy.append_frame(frame + 1, {});
                if (buf.window(t, T).size() != win.size() || buf.history(t).back().frame_index != frame) {
                    fail(r, "mutating a copy changed the original");
                }
                break;
            }
            case 5: {  // gap must be rejected without mutation
                if (order.empty()) break;
                try {
                    buf.append_frame(frame + 2, {});
                    fail(r, "frame gap accepted");
                } catch (const std::invalid_argument&) {
                }
                break;
            }
        }
        verify(op);
        ++r.trials;
    }
    finish(r, start);
    if (r.detail.empty()) r.passed = true;
    return r;
}

CheckResult hungarian_oracle(std::size_t trials, Rng& rng, double tolerance) {
    const auto start = Clock::now();
    CheckResult r{"hungarian-oracle", false, 0, 0.0, tolerance, 0.0, {}};
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = pick(rng, 1, 6), m = pick(rng, 1, 6);
        Tensor cost({n, m});
        const bool ties = pick(rng, 0, 1);
        for (double& v : cost.data()) v = ties ? static_cast<double>(pick(rng, 0, 3)) : uniform(rng, 0.0, 10.0);
        const Assignment a = hungarian(cost);
        if (a.pairs.size() != std::min(n, m)) fail(r, "matching is not maximum");
        std::vector<bool> rows(n, false), cols(m, false);
        for (const auto& [i, j] : a.pairs) {
            if (rows[i] || cols[j]) fail(r, "index reused in matching");
            rows[i] = cols[j] = true;
        }
        r.worst = std::max(r.worst, std::abs(assignment_cost(cost, a) - brute_force_min_cost(cost)));
        ++r.trials;
    }
    finish(r, start);
    return r;
}

CheckResult idf1_oracle(std::size_t scenes, Rng& rng) {
    const auto start = Clock::now();
    CheckResult r{"idf1-oracle", false, 0, 0.0, 0.0, 0.0, {}};
    for (std::size_t s = 0; s < scenes; ++s) {
        const auto [gt, pred] = random_id_scene(rng, 5, 10);
        std::map<TrackId, std::size_t> gi, pi;
        for (const auto& f : gt)
            for (const auto& row : f.rows) gi.emplace(row.id, gi.size());
        for (const auto& f : pred)
            for (const auto& row : f.rows) pi.emplace(row.id, pi.size());
        Tensor overlap({std::max<std::size_t>(gi.size(), 1), std::max<std::size_t>(pi.size(), 1)});
        std::size_t total_gt = 0, total_pred = 0;
        for (const auto& g : gt) {
            total_gt += g.rows.size();
            for (const auto& p : pred) {
                if (p.frame != g.frame) continue;
                for (const auto& gr : g.rows)
                    for (const auto& pr : p.rows)
                        if (pixel_iou(gr.box, pr.box) >= 0.5) overlap(gi.at(gr.id), pi.at(pr.id)) += 1.0;
            }
        }
        for (const auto& p : pred) total_pred += p.rows.size();
        const double best = brute_force_max_weight(overlap);
        const IdentityScores ids = idf1(gt, pred, 0.5);
        const double expect_f1 = best > 0.0 ? 2.0 * best / (static_cast<double>(total_gt + total_pred)) : 0.0;
        r.worst = std::max({r.worst, std::abs(static_cast<double>(ids.idtp) - best), std::abs(ids.idf1 - expect_f1)});
        if (ids.idfn != total_gt - ids.idtp || ids.idfp != total_pred - ids.idtp) fail(r, "IDFN/IDFP bookkeeping");
        ++r.trials;
    }
    r.tolerance = 1e-12;
    finish(r, start);
    return r;
}

CheckResult metric_arithmetic(std::size_t relabel_trials, Rng& rng) {
    const auto start = Clock::now();
    CheckResult r{"metric-arithmetic", false, 0, 0.0, 1e-9, 0.0, {}};

    if (mota(ClearCounts{10, 1, 2, 1, 0}) != 0.6) fail(r, "mota(GT=10, FP=1, FN=2, IDSW=1) != 0.6");
    // The same counts produced by matching: A tracked throughout; B matched as
    // id 2, missed, re-acquired as id 3, missed; one stray prediction.
    Sequence gt, pred;
    for (std::size_t f = 1; f <= 5; ++f) {
        gt.push_back({f, {{1, {0, 0, 50, 50}, 1.0, {}}, {2, {200, 0, 50, 50}, 1.0, {}}}});
        FrameAnnotations p{f, {{1, {1, 1, 50, 50}, 1.0, {}}}};
        if (f <= 2) p.rows.push_back({2, {201, 0, 50, 50}, 1.0, {}});
        if (f == 4) p.rows.push_back({3, {199, 0, 50, 50}, 1.0, {}});
        if (f == 1) p.rows.push_back({9, {400, 400, 50, 50}, 1.0, {}});
        pred.push_back(p);
    }
    const ClearResult clear = match_frames(gt, pred, 0.5);
    if (clear.totals.gt != 10 || clear.totals.fp != 1 || clear.totals.fn != 2 || clear.totals.idsw != 1) {
        fail(r, "constructed CLEAR counts differ from GT=10 FP=1 FN=2 IDSW=1");
    }
    if (mota(clear.totals) != 0.6) fail(r, "constructed MOTA != 0.6");

    const Sequence split_gt{{1, {{1, {10, 10, 40, 40}, 1.0, {}}}}, {2, {{1, {10, 10, 40, 40}, 1.0, {}}}}};
    const Sequence split_pred{{1, {{5, {10, 10, 40, 40}, 1.0, {}}}}, {2, {{6, {10, 10, 40, 40}, 1.0, {}}}}};
    const HotaScores h = hota(split_gt, split_pred);
    r.worst = std::max({r.worst, std::abs(h.hota - std::sqrt(0.5)), std::abs(h.deta - 1.0), std::abs(h.assa - 0.5)});
    for (std::size_t a = 0; a < 19; ++a) {
        r.worst = std::max(r.worst, std::abs(h.hota_alpha[a] - std::sqrt(h.deta_alpha[a] * h.assa_alpha[a])));
    }

    for (std::size_t t = 0; t < relabel_trials; ++t) {
        auto [g, p] = random_id_scene(rng, 5, 10);
        if (g.empty()) continue;
        std::vector<TrackId> fresh(40);
        std::iota(fresh.begin(), fresh.end(), TrackId{100});
        std::shuffle(fresh.begin(), fresh.end(), rng);
        std::map<TrackId, TrackId> relabel;
        Sequence q = p;
        for (auto& f : q)
            for (auto& row : f.rows) {
                if (!relabel.contains(row.id)) relabel.emplace(row.id, fresh[relabel.size()]);
                row.id = relabel.at(row.id);
            }
        const MetricReport a = evaluate(g, p), b = evaluate(g, q);
        r.worst = std::max({r.worst, std::abs(a.mota - b.mota), std::abs(a.idf1 - b.idf1), std::abs(a.hota - b.hota)});
        ++r.trials;
    }
    r.trials += 3;
    finish(r, start);
    return r;
}

CheckResult equivariance(std::size_t instances, Rng& rng, double tolerance) {
    const auto start = Clock::now();
    CheckResult r{"equivariance", false, 0, 0.0, tolerance, 0.0, {}};
    CpnDims dims{4, 16, 2, 1, 2, 32};
    for (std::size_t t = 0; t < instances; ++t) {
        // proposal network
        const CpnParams cpn = CpnParams::random(dims, rng);
        const std::size_t nq = pick(rng, 2, 8);
        const ObjectQuerySet qs = ObjectQuerySet::random(nq, dims.d_model, rng);
        const EncodedFrame frame = encode_frame(random_normal({dims.feature_channels, 4, 4}, 1.0, rng), cpn);
        std::vector<std::size_t> perm(nq);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        Tensor pe({nq, dims.d_model}), pp({nq, dims.d_model});
        for (std::size_t i = 0; i < nq; ++i)
            for (std::size_t c = 0; c < dims.d_model; ++c) {
                pe(i, c) = qs.embeddings()(perm[i], c);
                pp(i, c) = qs.positions()(perm[i], c);
            }
        const auto base = propose(frame, qs, cpn);
        const auto permuted = propose(frame, ObjectQuerySet(pe, pp), cpn);
        for (std::size_t i = 0; i < nq; ++i) {
            const auto& a = base[perm[i]];
            const auto& b = permuted[i];
            r.worst = std::max({r.worst, max_abs_diff(a.embedding, b.embedding), box_diff(a.box, b.box),
                                std::abs(a.objectness - b.objectness)});
        }
        ++r.trials;

        // tracker decoder
        const TrackerDecoderParams dec = TrackerDecoderParams::random(dims.d_model, dims.n_heads, 2, 32, rng);
        const std::size_t m = pick(rng, 1, 6), nc = pick(rng, 1, 5), nt = pick(rng, 0, 3);
        DecoderMemory mem{random_normal({m, dims.d_model}, 1.0, rng), random_normal({m, dims.d_model}, 1.0, rng), {}, {}};
        for (std::size_t j = 0; j < m; ++j) {
            mem.boxes.push_back(random_box(rng));
            mem.objectness.push_back(uniform(rng, 0.0, 1.0));
        }
        std::vector<Proposal> cands;
        for (std::size_t i = 0; i < nc; ++i)
            cands.push_back({random_normal({dims.d_model}, 1.0, rng), random_box(rng), uniform(rng, 0.0, 1.0)});
        std::vector<TrackletQuery> tracks;
        for (std::size_t i = 0; i < nt; ++i)
            tracks.push_back({static_cast<TrackId>(i + 1), random_normal({dims.d_model}, 1.0, rng), random_box(rng)});
        std::vector<std::size_t> cp(nc);
        std::iota(cp.begin(), cp.end(), std::size_t{0});
        std::shuffle(cp.begin(), cp.end(), rng);
        std::vector<Proposal> shuffled;
        for (std::size_t i : cp) shuffled.push_back(cands[i]);
        const auto e0 = decode(mem, cands, tracks, dec);
        const auto e1 = decode(mem, shuffled, tracks, dec);
        auto entry_diff = [](const QueryEntry& a, const QueryEntry& b) {
            return std::max({max_abs_diff(a.embedding, b.embedding), box_diff(a.box, b.box),
                             std::abs(a.objectness - b.objectness), std::abs(a.uniqueness - b.uniqueness),
                             std::abs(a.confidence - b.confidence)});
        };
        for (std::size_t i = 0; i < nc; ++i) r.worst = std::max(r.worst, entry_diff(e0[cp[i]], e1[i]));
        for (std::size_t i = nc; i < nc + nt; ++i) {
            r.worst = std::max(r.worst, entry_diff(e0[i], e1[i]));
            if (e1[i].uniqueness != 1.0 || e1[i].source_id != tracks[i - nc].id) fail(r, "tracklet entry lost its identity");
        }
        ++r.trials;
    }
    finish(r, start);
    return r;
}

}  // namespace stmmot::checks
