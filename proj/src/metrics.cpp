#include "stmmot/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "stmmot/hungarian.hpp"

namespace stmmot {

namespace {

constexpr double kInvalid = 1e6;

// Frames present in either sequence, ascending, with pointers into each.
struct AlignedFrame {
    std::size_t frame;
    const std::vector<AnnotationRow>* gt;
    const std::vector<AnnotationRow>* pred;
};

const std::vector<AnnotationRow> kNoRows;

std::vector<AlignedFrame> align(const Sequence& gt, const Sequence& pred) {
    std::map<std::size_t, AlignedFrame> frames;
    for (const auto& f : gt) frames[f.frame] = {f.frame, &f.rows, &kNoRows};
    for (const auto& f : pred) {
        auto it = frames.find(f.frame);
        if (it == frames.end()) frames[f.frame] = {f.frame, &kNoRows, &f.rows};
        else it->second.pred = &f.rows;
    }
    std::vector<AlignedFrame> out;
    for (auto& [_, a] : frames) out.push_back(a);
    return out;
}

Tensor iou_matrix(const std::vector<AnnotationRow>& g, const std::vector<AnnotationRow>& p) {
    Tensor m({g.size(), p.size()});
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < p.size(); ++j) m(i, j) = iou(g[i].box, p[j].box);
    return m;
}

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

void check_frame_alignment(const Sequence& gt, const Sequence& pred) {
    if (pred.empty()) return;
    if (gt.empty()) {
        throw std::invalid_argument("prediction frame " + std::to_string(pred.front().frame) +
                                    " has no ground truth (ground truth is empty)");
    }
    std::size_t lo = gt.front().frame, hi = gt.front().frame;
    for (const auto& f : gt) {
        lo = std::min(lo, f.frame);
        hi = std::max(hi, f.frame);
    }
    std::vector<std::size_t> frames;
    for (const auto& f : pred) frames.push_back(f.frame);
    std::sort(frames.begin(), frames.end());
    for (std::size_t f : frames) {
        if (f < lo || f > hi) {
            throw std::invalid_argument("prediction frame " + std::to_string(f) + " lies outside the ground-truth range [" +
                                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
    }
}

ClearResult match_frames(const Sequence& gt, const Sequence& pred, double iou_threshold) {
    ClearResult out;
    std::map<TrackId, TrackId> last_match;  // gt id -> pred id, kept across gaps
    std::map<TrackId, TrackId> prev_frame;  // correspondences of the previous frame only
    for (const auto& af : align(gt, pred)) {
        const auto& g = *af.gt;
        const auto& p = *af.pred;
        const Tensor ious = iou_matrix(g, p);
        FrameMatch fm;
        fm.frame = af.frame;
        fm.gt = g.size();

        std::vector<bool> g_used(g.size(), false), p_used(p.size(), false);
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto it = prev_frame.find(g[i].id);
            if (it == prev_frame.end()) continue;
            for (std::size_t j = 0; j < p.size(); ++j) {
                if (!p_used[j] && p[j].id == it->second && ious(i, j) >= iou_threshold) {
                    g_used[i] = p_used[j] = true;
                    pairs.emplace_back(i, j);
                    break;
                }
            }
        }
        std::vector<std::size_t> gi, pj;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!g_used[i]) gi.push_back(i);
        for (std::size_t j = 0; j < p.size(); ++j)
            if (!p_used[j]) pj.push_back(j);
        if (!gi.empty() && !pj.empty()) {
            Tensor cost({gi.size(), pj.size()});
            for (std::size_t a = 0; a < gi.size(); ++a)
                for (std::size_t b = 0; b < pj.size(); ++b) {
                    const double v = ious(gi[a], pj[b]);
                    cost(a, b) = v >= iou_threshold ? 1.0 - v : kInvalid;
                }
            for (const auto& [a, b] : hungarian(cost).pairs) {
                if (ious(gi[a], pj[b]) >= iou_threshold) pairs.emplace_back(gi[a], pj[b]);
            }
        }

        std::map<TrackId, TrackId> current;
        for (const auto& [i, j] : pairs) {
            const TrackId gid = g[i].id, pid = p[j].id;
            const auto it = last_match.find(gid);
            if (it != last_match.end() && it->second != pid) ++fm.idsw;
            last_match[gid] = pid;
            current[gid] = pid;
            fm.matches.emplace_back(gid, pid);
        }
        std::sort(fm.matches.begin(), fm.matches.end());
        prev_frame = std::move(current);
        fm.fn = g.size() - pairs.size();
        fm.fp = p.size() - pairs.size();
        out.totals.gt += fm.gt;
        out.totals.fp += fm.fp;
        out.totals.fn += fm.fn;
        out.totals.idsw += fm.idsw;
        out.totals.matches += pairs.size();
        out.frames.push_back(std::move(fm));
    }
    return out;
}

double mota(const ClearCounts& c) {
    if (c.gt == 0) throw std::invalid_argument("mota: no ground-truth objects");
    return 1.0 - static_cast<double>(c.fp + c.fn + c.idsw) / static_cast<double>(c.gt);
}

IdentityScores idf1(const Sequence& gt, const Sequence& pred, double iou_threshold) {
    std::map<TrackId, std::size_t> gt_len, pred_len;
    std::map<std::pair<TrackId, TrackId>, std::size_t> overlap;
    std::size_t total_gt = 0, total_pred = 0;
    for (const auto& af : align(gt, pred)) {
        for (const auto& r : *af.gt) ++gt_len[r.id];
        for (const auto& r : *af.pred) ++pred_len[r.id];
        total_gt += af.gt->size();
        total_pred += af.pred->size();
        for (const auto& gr : *af.gt)
            for (const auto& pr : *af.pred)
                if (iou(gr.box, pr.box) >= iou_threshold) ++overlap[{gr.id, pr.id}];
    }

    IdentityScores s;
    std::vector<TrackId> gids, pids;
    for (const auto& [id, _] : gt_len) gids.push_back(id);
    for (const auto& [id, _] : pred_len) pids.push_back(id);
    if (!gids.empty() && !pids.empty()) {
        Tensor cost({gids.size(), pids.size()});
        for (std::size_t a = 0; a < gids.size(); ++a)
            for (std::size_t b = 0; b < pids.size(); ++b) {
                const auto it = overlap.find({gids[a], pids[b]});
                cost(a, b) = it == overlap.end() ? 0.0 : -static_cast<double>(it->second);
            }
        for (const auto& [a, b] : hungarian(cost).pairs) {
            const auto it = overlap.find({gids[a], pids[b]});
            if (it == overlap.end()) continue;
            s.idtp += it->second;
            s.mapping.emplace_back(gids[a], pids[b]);
        }
    }
    std::sort(s.mapping.begin(), s.mapping.end());
    s.idfn = total_gt - s.idtp;
    s.idfp = total_pred - s.idtp;
    const double denom = 2.0 * static_cast<double>(s.idtp) + static_cast<double>(s.idfp + s.idfn);
    s.idf1 = denom > 0.0 ? 2.0 * static_cast<double>(s.idtp) / denom : 0.0;
    return s;
}

HotaScores hota(const Sequence& gt, const Sequence& pred) {
    HotaScores out;
    for (std::size_t a = 0; a < 19; ++a) out.alphas[a] = 0.05 * static_cast<double>(a + 1);
    const auto frames = align(gt, pred);

    std::map<TrackId, std::size_t> gidx, pidx;
    for (const auto& af : frames) {
        for (const auto& r : *af.gt) gidx.emplace(r.id, gidx.size());
        for (const auto& r : *af.pred) pidx.emplace(r.id, pidx.size());
    }
    const std::size_t ng = gidx.size(), np = pidx.size();

    // Global alignment: soft co-occurrence of every gt/pred id pair.
    Tensor potential({ng, np});
    std::vector<double> gcount(ng, 0.0), pcount(np, 0.0);
    for (const auto& af : frames) {
        const auto& g = *af.gt;
        const auto& p = *af.pred;
        for (const auto& r : g) gcount[gidx.at(r.id)] += 1.0;
        for (const auto& r : p) pcount[pidx.at(r.id)] += 1.0;
        if (g.empty() || p.empty()) continue;
        const Tensor sim = iou_matrix(g, p);
        std::vector<double> rs(g.size(), 0.0), cs(p.size(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = 0; j < p.size(); ++j) {
                rs[i] += sim(i, j);
                cs[j] += sim(i, j);
            }
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = 0; j < p.size(); ++j) {
                const double denom = rs[i] + cs[j] - sim(i, j);
                if (denom > std::numeric_limits<double>::epsilon())
                    potential(gidx.at(g[i].id), pidx.at(p[j].id)) += sim(i, j) / denom;
            }
    }
    Tensor align_score({ng, np});
    for (std::size_t a = 0; a < ng; ++a)
        for (std::size_t b = 0; b < np; ++b) {
            const double denom = gcount[a] + pcount[b] - potential(a, b);
            align_score(a, b) = denom > 0.0 ? potential(a, b) / denom : 0.0;
        }

    std::array<double, 19> tp{}, fn{}, fp{};
    std::vector<Tensor> matches(19, Tensor({ng, np}));
    for (const auto& af : frames) {
        const auto& g = *af.gt;
        const auto& p = *af.pred;
        if (g.empty() || p.empty()) {
            for (std::size_t a = 0; a < 19; ++a) {
                fn[a] += static_cast<double>(g.size());
                fp[a] += static_cast<double>(p.size());
            }
            continue;
        }
        const Tensor sim = iou_matrix(g, p);
        Tensor cost({g.size(), p.size()});
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = 0; j < p.size(); ++j)
                cost(i, j) = -align_score(gidx.at(g[i].id), pidx.at(p[j].id)) * sim(i, j);
        const Assignment asg = hungarian(cost);
        for (std::size_t a = 0; a < 19; ++a) {
            std::size_t matched = 0;
            for (const auto& [i, j] : asg.pairs) {
                if (sim(i, j) >= out.alphas[a] - std::numeric_limits<double>::epsilon()) {
                    ++matched;
                    matches[a](gidx.at(g[i].id), pidx.at(p[j].id)) += 1.0;
                }
            }
            tp[a] += static_cast<double>(matched);
            fn[a] += static_cast<double>(g.size() - matched);
            fp[a] += static_cast<double>(p.size() - matched);
        }
    }

    for (std::size_t a = 0; a < 19; ++a) {
        double ass = 0.0;
        for (std::size_t i = 0; i < ng; ++i)
            for (std::size_t j = 0; j < np; ++j) {
                const double m = matches[a](i, j);
                if (m > 0.0) ass += m * m / (gcount[i] + pcount[j] - m);
            }
        out.assa_alpha[a] = ass / std::max(1.0, tp[a]);
        out.deta_alpha[a] = tp[a] / std::max(1.0, tp[a] + fn[a] + fp[a]);
        out.hota_alpha[a] = std::sqrt(out.deta_alpha[a] * out.assa_alpha[a]);
        out.hota += out.hota_alpha[a] / 19.0;
        out.deta += out.deta_alpha[a] / 19.0;
        out.assa += out.assa_alpha[a] / 19.0;
    }
    return out;
}

MetricReport evaluate(const Sequence& gt, const Sequence& pred, double iou_threshold) {
    check_frame_alignment(gt, pred);
    const ClearResult clear = match_frames(gt, pred, iou_threshold);
    const IdentityScores ids = idf1(gt, pred, iou_threshold);
    const HotaScores h = hota(gt, pred);
    MetricReport r;
    r.mota = mota(clear.totals);
    r.idf1 = ids.idf1;
    r.hota = h.hota;
    r.deta = h.deta;
    r.assa = h.assa;
    r.gt = clear.totals.gt;
    r.fp = clear.totals.fp;
    r.fn = clear.totals.fn;
    r.idsw = clear.totals.idsw;
    r.idtp = ids.idtp;
    r.idfp = ids.idfp;
    r.idfn = ids.idfn;
    return r;
}

nlohmann::json to_json(const MetricReport& r) {
    return {{"MOTA", r.mota}, {"IDF1", r.idf1}, {"HOTA", r.hota}, {"DetA", r.deta}, {"AssA", r.assa},
            {"GT", r.gt},     {"FP", r.fp},     {"FN", r.fn},     {"IDSW", r.idsw}, {"IDTP", r.idtp},
            {"IDFP", r.idfp}, {"IDFN", r.idfn}};
}

std::pair<std::string, std::string> to_csv(const MetricReport& r) {
    std::string values = fmt(r.mota) + "," + fmt(r.idf1) + "," + fmt(r.hota) + "," + fmt(r.deta) + "," + fmt(r.assa) +
                         "," + std::to_string(r.gt) + "," + std::to_string(r.fp) + "," + std::to_string(r.fn) + "," +
                         std::to_string(r.idsw) + "," + std::to_string(r.idtp) + "," + std::to_string(r.idfp) + "," +
                         std::to_string(r.idfn);
    return {"MOTA,IDF1,HOTA,DetA,AssA,GT,FP,FN,IDSW,IDTP,IDFP,IDFN", values};
}

}  // namespace stmmot
