#include "stmmot/tracker.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "stmmot/errors.hpp"

namespace stmmot {

namespace {

constexpr double kRefEps = 1e-6;

std::string key(std::string_view prefix, std::string_view name) {
    std::string k(prefix);
    k += '.';
    k += name;
    return k;
}

double ref_logit(double p) { return logit(std::clamp(p, kRefEps, 1.0 - kRefEps)); }

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

double confidence(double objectness, double uniqueness) {
    if (!in_unit(objectness) || !in_unit(uniqueness)) {
        throw std::invalid_argument("confidence: objectness and uniqueness must lie in [0, 1]");
    }
    return objectness * uniqueness;
}

void DecoderMemory::validate(std::size_t d) const {
    const std::size_t m = boxes.size();
    require_shape(features, {m, d}, "DecoderMemory features");
    require_shape(positions, {m, d}, "DecoderMemory positions");
    if (objectness.size() != m) throw std::invalid_argument("DecoderMemory: objectness count differs from token count");
    for (double o : objectness)
        if (!in_unit(o)) throw std::invalid_argument("DecoderMemory: objectness prior outside [0, 1]");
}

DecoderMemory memory_from_proposals(const std::vector<Proposal>& proposals, std::size_t d) {
    DecoderMemory m{Tensor({proposals.size(), d}), Tensor({proposals.size(), d}), {}, {}};
    for (std::size_t i = 0; i < proposals.size(); ++i) {
        require_shape(proposals[i].embedding, {d}, "proposal embedding");
        for (std::size_t c = 0; c < d; ++c) m.features(i, c) = proposals[i].embedding[c];
        m.boxes.push_back(proposals[i].box);
        m.objectness.push_back(proposals[i].objectness);
    }
    return m;
}

DecoderMemory memory_from_frame(const EncodedFrame& frame) {
    DecoderMemory m{frame.features, frame.positions, {}, {}};
    const double H = static_cast<double>(frame.height), W = static_cast<double>(frame.width);
    for (std::size_t y = 0; y < frame.height; ++y) {
        for (std::size_t x = 0; x < frame.width; ++x) {
            m.boxes.push_back({(static_cast<double>(x) + 0.5) / W, (static_cast<double>(y) + 0.5) / H, 1.0 / W, 1.0 / H});
            m.objectness.push_back(0.5);
        }
    }
    return m;
}

TrackerDecoderParams TrackerDecoderParams::random(std::size_t d, std::size_t n_heads, std::size_t layers,
                                                  std::size_t hidden, Rng& rng) {
    TrackerDecoderParams p;
    for (std::size_t i = 0; i < layers; ++i) p.layers.push_back(DecoderLayerParams::random(d, n_heads, hidden, rng));
    p.box_w = random_normal({4, d}, 0.02, rng);
    p.box_b = Tensor({4});
    p.obj_w = random_normal({1, d}, 0.02, rng);
    p.obj_b = Tensor({1});
    p.uni_w = random_normal({1, d}, 0.02, rng);
    p.uni_b = Tensor({1});
    p.validate();
    return p;
}

void TrackerDecoderParams::validate() const {
    if (layers.empty()) throw std::invalid_argument("TrackerDecoderParams: need at least one layer");
    if (box_w.rank() != 2) throw std::invalid_argument("TrackerDecoderParams: box head must be rank 2");
    const std::size_t d = width();
    for (const auto& l : layers) {
        l.self_attn.validate();
        l.cross_attn.validate();
        if (l.self_attn.d_model != d || l.cross_attn.d_model != d) {
            throw std::invalid_argument("TrackerDecoderParams: layer width mismatch");
        }
    }
    require_shape(box_w, {4, d}, "decoder box head");
    require_shape(box_b, {4}, "decoder box bias");
    require_shape(obj_w, {1, d}, "decoder objectness head");
    require_shape(obj_b, {1}, "decoder objectness bias");
    require_shape(uni_w, {1, d}, "decoder uniqueness head");
    require_shape(uni_b, {1}, "decoder uniqueness bias");
}

void TrackerDecoderParams::save(ParamStore& store, std::string_view prefix) const {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].save(store, key(prefix, "layer." + std::to_string(i)));
    store.put(key(prefix, "box_w"), box_w);
    store.put(key(prefix, "box_b"), box_b);
    store.put(key(prefix, "obj_w"), obj_w);
    store.put(key(prefix, "obj_b"), obj_b);
    store.put(key(prefix, "uni_w"), uni_w);
    store.put(key(prefix, "uni_b"), uni_b);
}

TrackerDecoderParams TrackerDecoderParams::load(const ParamStore& store, std::string_view prefix) {
    TrackerDecoderParams p;
    for (std::size_t i = 0; store.contains(key(prefix, "layer." + std::to_string(i) + ".self_attn.w_q")); ++i)
        p.layers.push_back(DecoderLayerParams::load(store, key(prefix, "layer." + std::to_string(i))));
    p.box_w = store.get(key(prefix, "box_w"));
    p.box_b = store.get(key(prefix, "box_b"));
    p.obj_w = store.get(key(prefix, "obj_w"));
    p.obj_b = store.get(key(prefix, "obj_b"));
    p.uni_w = store.get(key(prefix, "uni_w"));
    p.uni_b = store.get(key(prefix, "uni_b"));
    p.validate();
    return p;
}

DecodeTrace decode_traced(const DecoderMemory& memory, const std::vector<Proposal>& candidates,
                          const std::vector<TrackletQuery>& tracklets, const TrackerDecoderParams& params) {
    params.validate();
    const std::size_t d = params.width();
    memory.validate(d);
    if (memory.size() == 0) throw std::invalid_argument("decode: memory has no tokens");

    const std::size_t nc = candidates.size(), n = nc + tracklets.size();
    Tensor tgt({n, d});
    std::vector<std::array<double, 4>> ref_box(n);
    std::vector<double> ref_obj(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool cand = i < nc;
        const Tensor& e = cand ? candidates[i].embedding : tracklets[i - nc].embedding;
        require_shape(e, {d}, cand ? "decode candidate embedding" : "decode tracklet embedding");
        for (std::size_t c = 0; c < d; ++c) tgt(i, c) = e[c];
        ref_box[i] = cand ? candidates[i].box.as_array() : tracklets[i - nc].last_box.as_array();
        ref_obj[i] = cand ? candidates[i].objectness : 0.0;
    }

    DecodeTrace trace;
    const Tensor qpos({n, d});
    for (const auto& layer : params.layers) {
        DecoderLayerTrace lt = decoder_layer_forward(tgt, qpos, memory.features, memory.positions, layer);
        const std::size_t heads = lt.cross.weights.dim(0);
        for (std::size_t i = 0; i < n; ++i) {
            std::array<double, 4> nb{};
            double no = 0.0;
            for (std::size_t h = 0; h < heads; ++h) {
                for (std::size_t j = 0; j < memory.size(); ++j) {
                    const double w = lt.cross.weights(h, i, j);
                    const auto mb = memory.boxes[j].as_array();
                    for (std::size_t c = 0; c < 4; ++c) nb[c] += w * mb[c];
                    no += w * memory.objectness[j];
                }
                const double sink = lt.cross.sink_mass(h, i);
                for (std::size_t c = 0; c < 4; ++c) nb[c] += sink * ref_box[i][c];
                no += sink * ref_obj[i];
            }
            for (std::size_t c = 0; c < 4; ++c) ref_box[i][c] = std::clamp(nb[c] / static_cast<double>(heads), 0.0, 1.0);
            ref_obj[i] = std::clamp(no / static_cast<double>(heads), 0.0, 1.0);
        }
        tgt = std::move(lt.output);
        trace.cross.push_back(std::move(lt.cross));
    }

    const Tensor box_delta = linear(tgt, params.box_w, &params.box_b);
    const Tensor obj_delta = linear(tgt, params.obj_w, &params.obj_b);
    const Tensor uni_logit = linear(tgt, params.uni_w, &params.uni_b);
    trace.entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        QueryEntry e;
        e.kind = i < nc ? QueryKind::candidate : QueryKind::tracklet;
        e.source_id = i < nc ? -1 : tracklets[i - nc].id;
        e.embedding = take_row(tgt, i);
        std::array<double, 4> b{};
        for (std::size_t c = 0; c < 4; ++c) b[c] = sigmoid(ref_logit(ref_box[i][c]) + box_delta(i, c));
        e.box = Box::from_array(b);
        e.objectness = sigmoid(ref_logit(ref_obj[i]) + obj_delta(i, 0));
        e.uniqueness = i < nc ? sigmoid(uni_logit(i, 0)) : 1.0;
        e.confidence = confidence(e.objectness, e.uniqueness);
        trace.entries.push_back(std::move(e));
    }
    return trace;
}

std::vector<QueryEntry> decode(const DecoderMemory& memory, const std::vector<Proposal>& candidates,
                               const std::vector<TrackletQuery>& tracklets, const TrackerDecoderParams& params) {
    return decode_traced(memory, candidates, tracklets, params).entries;
}

double matching_cost(const QueryEntry& entry, const Box& gt, const MatchingWeights& w) {
    const auto p = entry.box.as_array(), g = gt.as_array();
    double l1 = 0.0;
    for (std::size_t c = 0; c < 4; ++c) l1 += std::abs(p[c] - g[c]);
    return -w.cls * entry.objectness + w.l1 * l1 + w.giou * (1.0 - giou(entry.box, gt));
}

Supervision assign_supervision(const std::vector<QueryEntry>& entries, const std::vector<GtObject>& gt,
                               const std::set<TrackId>& tracked_ids, const MatchingWeights& w) {
    Supervision sup;
    sup.visible = gt.size();
    sup.targets.resize(entries.size());
    std::map<TrackId, std::size_t> gt_by_id;
    for (std::size_t g = 0; g < gt.size(); ++g) gt_by_id.emplace(gt[g].id, g);

    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].kind == QueryKind::candidate) {
            cand.push_back(i);
            continue;
        }
        const auto it = gt_by_id.find(entries[i].source_id);
        if (it != gt_by_id.end()) {
            sup.targets[i] = {1.0, std::nullopt, gt[it->second].box, it->second};
        }
    }

    Assignment local;
    if (!cand.empty() && !gt.empty()) {
        Tensor cost({cand.size(), gt.size()});
        for (std::size_t r = 0; r < cand.size(); ++r)
            for (std::size_t g = 0; g < gt.size(); ++g) cost(r, g) = matching_cost(entries[cand[r]], gt[g].box, w);
        local = hungarian(cost);
    } else {
        local.unmatched_rows.resize(cand.size());
        std::iota(local.unmatched_rows.begin(), local.unmatched_rows.end(), std::size_t{0});
        local.unmatched_cols.resize(gt.size());
        std::iota(local.unmatched_cols.begin(), local.unmatched_cols.end(), std::size_t{0});
    }

    for (const auto& [r, g] : local.pairs) {
        const std::size_t i = cand[r];
        sup.candidate_matching.pairs.emplace_back(i, g);
        sup.targets[i] = {1.0, tracked_ids.contains(gt[g].id) ? 0.0 : 1.0, gt[g].box, g};
    }
    for (std::size_t r : local.unmatched_rows) sup.candidate_matching.unmatched_rows.push_back(cand[r]);
    sup.candidate_matching.unmatched_cols = local.unmatched_cols;
    return sup;
}

void TrackerConfig::validate() const {
    if (!(conf_threshold > 0.0 && conf_threshold < 1.0)) throw std::invalid_argument("TrackerConfig: conf_threshold must lie in (0, 1)");
    if (k_miss == 0 || k_miss > t_max) throw std::invalid_argument("TrackerConfig: need 1 <= k_miss <= t_max");
    if (t_short == 0 || t_short > t_long || t_long > t_max) {
        throw std::invalid_argument("TrackerConfig: need 1 <= t_short <= t_long <= t_max");
    }
    if (n_max == 0) throw std::invalid_argument("TrackerConfig: n_max must be positive");
    if (!in_unit(dup_iou)) throw std::invalid_argument("TrackerConfig: dup_iou must lie in [0, 1]");
    if (!in_unit(birth_uniqueness)) throw std::invalid_argument("TrackerConfig: birth_uniqueness must lie in [0, 1]");
}

void TrackerModel::validate() const {
    decoder.validate();
    blocks.validate();
    if (blocks.width() != width()) throw std::invalid_argument("TrackerModel: memory encoder and decoder widths differ");
    if (cpn.has_value() != queries.has_value()) {
        throw std::invalid_argument("TrackerModel: proposal network and object queries must come together");
    }
    if (cpn) {
        cpn->validate();
        if (cpn->d_model != width() || queries->width() != width()) {
            throw std::invalid_argument("TrackerModel: proposal network width differs from decoder width");
        }
    }
    if (svp) {
        svp->validate();
        if (!cpn || svp->channels() != cpn->input_w.dim(1)) {
            throw std::invalid_argument("TrackerModel: pyramid channels must match the proposal network input");
        }
    }
}

void TrackerModel::save(ParamStore& store) const {
    decoder.save(store);
    blocks.save(store);
    if (cpn) {
        cpn->save(store);
        store.put("queries.embeddings", queries->embeddings());
        store.put("queries.positions", queries->positions());
    }
    if (svp) svp->save(store);
}

TrackerModel TrackerModel::load(const ParamStore& store) {
    TrackerModel m{TrackerDecoderParams::load(store), EncoderBlocks::load(store), std::nullopt, std::nullopt,
                   std::nullopt};
    if (store.contains("cpn.input_w")) {
        m.cpn = CpnParams::load(store);
        m.queries = ObjectQuerySet(store.get("queries.embeddings"), store.get("queries.positions"));
    }
    if (store.contains("svp.config")) m.svp = SvpParams::load(store);
    m.validate();
    return m;
}

TrackerModel identity_tracker_model(std::size_t d, double beta, std::size_t decoder_layers) {
    TrackerModel m;
    AttentionParams attn = AttentionParams::identity(d, 1);
    attn.logit_scale = beta;
    AttentionParams cross = attn;
    cross.sink_logits = {beta / 2.0};
    // gamma = 1/sqrt(d) keeps normalized rows at unit length, the scale of the
    // identity embeddings the logit scale and sink are tuned for
    const LayerNormParams norm{Tensor({d}, 1.0 / std::sqrt(static_cast<double>(d))), Tensor({d})};
    for (std::size_t i = 0; i < decoder_layers; ++i) {
        m.decoder.layers.push_back({attn, cross, Ffn::identity(d), norm, norm, norm});
    }
    m.decoder.box_w = Tensor({4, d});
    m.decoder.box_b = Tensor({4});
    m.decoder.obj_w = Tensor({1, d});
    m.decoder.obj_b = Tensor({1});
    m.decoder.uni_w = Tensor({1, d});
    m.decoder.uni_b = Tensor::vector({logit(0.9)});
    m.blocks = EncoderBlocks::identity(d, beta);
    m.validate();
    return m;
}

TrackerModel random_tracker_model(const CpnDims& dims, std::size_t n_queries, std::size_t svp_levels,
                                  std::size_t pftls_per_level, Rng& rng) {
    TrackerModel m;
    m.decoder = TrackerDecoderParams::random(dims.d_model, dims.n_heads, dims.decoder_layers, dims.ffn_hidden, rng);
    m.blocks = EncoderBlocks::random(dims.d_model, dims.n_heads, rng);
    m.cpn = CpnParams::random(dims, rng);
    m.queries = ObjectQuerySet::random(n_queries, dims.d_model, rng);
    if (svp_levels > 0) m.svp = SvpParams::random(dims.feature_channels, svp_levels, pftls_per_level, rng);
    m.validate();
    return m;
}

void TrackerState::check() const {
    buffer.check_invariants();
    if (live.size() != buffer.size() || dmats.size() != buffer.size()) {
        throw InvariantError("TrackerState: " + std::to_string(live.size()) + " live tracks, " +
                             std::to_string(dmats.size()) + " DMATs, " + std::to_string(buffer.size()) +
                             " buffered tracks");
    }
    for (TrackId id : buffer.track_ids()) {
        if (!live.contains(id) || !dmats.contains(id)) {
            throw InvariantError("TrackerState: track " + std::to_string(id) + " is buffered but not live");
        }
        if (id >= next_id) throw InvariantError("TrackerState: live id not below next_id");
        if (buffer.history(id).back().frame_index != frame) {
            throw InvariantError("TrackerState: track " + std::to_string(id) + " history lags the frame counter");
        }
    }
}

namespace {

StepResult run_step(const DecoderMemory& memory, const std::vector<Proposal>& candidates, TrackerState& state,
                    const TrackerConfig& cfg, const TrackerModel& model) {
    cfg.validate();
    state.check();
    if (model.blocks.t_short != cfg.t_short || model.blocks.t_long != cfg.t_long) {
        throw std::invalid_argument("step: memory encoder windows differ from the tracker configuration");
    }
    if (state.buffer.n_max() != cfg.n_max || state.buffer.t_max() != cfg.t_max) {
        throw std::invalid_argument("step: state buffer capacities differ from the tracker configuration");
    }
    const std::size_t frame = state.frame + 1;

    EncodedTracks enc = encode_all(state.buffer, state.dmats, model.blocks);
    // A track whose encoder window holds only padding has nothing to re-bind
    // with; it is not decoded and simply accrues a miss.
    std::vector<TrackletQuery> tracklets;
    std::vector<TrackId> blind;
    for (std::size_t i = 0; i < enc.ids.size(); ++i) {
        const auto window = state.buffer.window(enc.ids[i], model.blocks.horizon());
        if (std::none_of(window.begin(), window.end(), [](const TrackState& s) { return s.present; })) {
            blind.push_back(enc.ids[i]);
            continue;
        }
        tracklets.push_back({enc.ids[i], take_row(enc.tracklets, i), state.live.at(enc.ids[i]).last_box});
    }

    StepResult result;
    if (memory.size() > 0) {
        result.entries = decode(memory, candidates, tracklets, model.decoder);
    } else {
        for (const auto& t : tracklets) {
            result.entries.push_back({QueryKind::tracklet, t.id, t.embedding, t.last_box, 0.0, 1.0, 0.0});
        }
    }

    std::map<TrackId, TrackState> present;
    std::vector<Box> taken;
    for (TrackId id : blind) ++state.live.at(id).misses;
    for (const auto& e : result.entries) {
        if (e.kind != QueryKind::tracklet) continue;
        LiveTrack& lt = state.live.at(e.source_id);
        if (e.confidence >= cfg.conf_threshold) {
            present.emplace(e.source_id, TrackState{e.embedding, e.box, e.confidence, frame, true});
            lt.last_box = e.box;
            lt.misses = 0;
            taken.push_back(e.box);
            result.outputs.push_back({e.source_id, e.box, e.confidence});
        } else {
            ++lt.misses;
        }
    }
    state.buffer.append_frame(frame, present);
    state.dmats = std::move(enc.dmats);
    state.frame = frame;

    for (TrackId id : std::vector<TrackId>(state.buffer.track_ids())) {
        if (state.live.at(id).misses >= cfg.k_miss) {
            state.buffer.remove(id);
            state.dmats.erase(id);
            state.live.erase(id);
            result.terminated.push_back(id);
        }
    }

    std::vector<std::size_t> births;
    for (std::size_t i = 0; i < result.entries.size(); ++i) {
        const auto& e = result.entries[i];
        if (e.kind == QueryKind::candidate && e.confidence >= cfg.conf_threshold && e.uniqueness >= cfg.birth_uniqueness)
            births.push_back(i);
    }
    std::stable_sort(births.begin(), births.end(), [&](std::size_t a, std::size_t b) {
        return result.entries[a].confidence > result.entries[b].confidence;
    });
    for (std::size_t i : births) {
        const auto& e = result.entries[i];
        const bool duplicate =
            std::any_of(taken.begin(), taken.end(), [&](const Box& b) { return iou(e.box, b) >= cfg.dup_iou; });
        if (duplicate) continue;
        const TrackId id = state.next_id++;
        if (const auto evicted = state.buffer.admit(id, TrackState{e.embedding, e.box, e.confidence, frame, true})) {
            state.dmats.erase(*evicted);
            state.live.erase(*evicted);
        }
        state.dmats.emplace(id, model.blocks.dmat_init);
        state.live.emplace(id, LiveTrack{e.box, 0});
        taken.push_back(e.box);
        result.outputs.push_back({id, e.box, e.confidence});
        result.born.push_back(id);
    }

    std::sort(result.outputs.begin(), result.outputs.end(),
              [](const TrackOutput& a, const TrackOutput& b) { return a.id < b.id; });
    state.check();
    return result;
}

}  // namespace

StepResult step(const std::vector<Proposal>& proposals, TrackerState& state, const TrackerConfig& cfg,
                const TrackerModel& model) {
    return run_step(memory_from_proposals(proposals, model.width()), proposals, state, cfg, model);
}

StepResult step_features(const Tensor& feature, const Tensor* previous, TrackerState& state,
                         const TrackerConfig& cfg, const TrackerModel& model) {
    if (!model.cpn || !model.queries) {
        throw std::invalid_argument("step_features: model has no proposal network (identity models are oracle-only)");
    }
    Tensor f0 = feature;
    if (model.svp) f0 = svp_forward({feature, previous != nullptr ? *previous : feature}, *model.svp).front();
    const EncodedFrame encoded = encode_frame(f0, *model.cpn);
    const std::vector<Proposal> candidates = propose(encoded, *model.queries, *model.cpn);
    return run_step(memory_from_frame(encoded), candidates, state, cfg, model);
}

}  // namespace stmmot
