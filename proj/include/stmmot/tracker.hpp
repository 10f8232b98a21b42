#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include "stmmot/box.hpp"
#include "stmmot/cpn.hpp"
#include "stmmot/hungarian.hpp"
#include "stmmot/mem_encoder.hpp"
#include "stmmot/memory.hpp"
#include "stmmot/params.hpp"
#include "stmmot/svp.hpp"
#include "stmmot/tensor.hpp"
#include "stmmot/transformer.hpp"

namespace stmmot {

enum class QueryKind { candidate, tracklet };

/// One decoded query.
struct QueryEntry {
    QueryKind kind = QueryKind::candidate;
    TrackId source_id = -1;  ///< tracklet entries only
    Tensor embedding;        ///< decoder output, [d]
    Box box;
    double objectness = 0.0;
    double uniqueness = 0.0;
    double confidence = 0.0;
};

/// s = o * u; both arguments must lie in [0, 1].
double confidence(double objectness, double uniqueness);

/// Key/value set the decoder attends to. Each token carries a reference box
/// and objectness prior that cross-attention blends into the queries.
struct DecoderMemory {
    Tensor features;   ///< [M, d]
    Tensor positions;  ///< [M, d]
    std::vector<Box> boxes;
    std::vector<double> objectness;

    std::size_t size() const { return boxes.size(); }
    void validate(std::size_t d) const;
};

/// Detection tokens: proposal embeddings with their boxes and objectness.
DecoderMemory memory_from_proposals(const std::vector<Proposal>& proposals, std::size_t d);

/// Encoded grid: each cell's reference box is the cell itself, prior 0.5.
DecoderMemory memory_from_frame(const EncodedFrame& frame);

struct TrackletQuery {
    TrackId id = -1;
    Tensor embedding;  ///< [d]
    Box last_box;
};

struct TrackerDecoderParams {
    std::vector<DecoderLayerParams> layers;
    Tensor box_w, box_b;  ///< [4, d], [4]; residual on logit(reference box)
    Tensor obj_w, obj_b;  ///< [1, d], [1]; residual on logit(reference objectness)
    Tensor uni_w, uni_b;  ///< [1, d], [1]

    static TrackerDecoderParams random(std::size_t d, std::size_t n_heads, std::size_t layers, std::size_t hidden,
                                       Rng& rng);
    std::size_t width() const { return box_w.dim(1); }
    void validate() const;
    void save(ParamStore& store, std::string_view prefix = "decoder") const;
    static TrackerDecoderParams load(const ParamStore& store, std::string_view prefix = "decoder");
};

struct DecodeTrace {
    std::vector<QueryEntry> entries;
    std::vector<AttentionTrace> cross;  ///< one per layer, queries x memory tokens
};

/// Joint decoding of candidates (first) and tracklets (after). Output order
/// follows input order.
std::vector<QueryEntry> decode(const DecoderMemory& memory, const std::vector<Proposal>& candidates,
                               const std::vector<TrackletQuery>& tracklets, const TrackerDecoderParams& params);

DecodeTrace decode_traced(const DecoderMemory& memory, const std::vector<Proposal>& candidates,
                          const std::vector<TrackletQuery>& tracklets, const TrackerDecoderParams& params);

struct GtObject {
    TrackId id = -1;
    Box box;
};

/// Training target of one decoded entry.
struct EntryTarget {
    double objectness = 0.0;
    std::optional<double> uniqueness;  ///< matched candidates only
    std::optional<Box> box;
    std::optional<std::size_t> gt_index;
};

struct Supervision {
    Assignment candidate_matching;    ///< rows index candidate entries, columns gt objects
    std::vector<EntryTarget> targets; ///< aligned with the entry list
    std::size_t visible = 0;          ///< N_t
};

struct MatchingWeights {
    double cls = 3.0;
    double l1 = 6.0;
    double giou = 3.0;
};

/// Matching cost of one candidate against one gt box: -cls*o + l1*|b-b*|_1 + giou*(1-GIoU).
double matching_cost(const QueryEntry& entry, const Box& gt, const MatchingWeights& w = {});

Supervision assign_supervision(const std::vector<QueryEntry>& entries, const std::vector<GtObject>& gt,
                               const std::set<TrackId>& tracked_ids, const MatchingWeights& w = {});

struct TrackerConfig {
    double conf_threshold = 0.5;
    std::size_t k_miss = 30;
    std::size_t t_short = 5;
    std::size_t t_long = 25;
    std::size_t t_max = 30;
    std::size_t n_max = 350;
    double dup_iou = 0.7;
    double birth_uniqueness = 0.5;

    void validate() const;
};

/// Everything the per-frame loop needs besides its state.
struct TrackerModel {
    TrackerDecoderParams decoder;
    EncoderBlocks blocks;
    // learned path only
    std::optional<CpnParams> cpn;
    std::optional<ObjectQuerySet> queries;
    std::optional<SvpParams> svp;

    std::size_t width() const { return decoder.width(); }
    void validate() const;
    void save(ParamStore& store) const;
    static TrackerModel load(const ParamStore& store);
};

/// Identity projections and FFNs, logit scale `beta`, zero heads except the
/// uniqueness bias, a cross-attention sink at beta/2, no learned-path parts.
TrackerModel identity_tracker_model(std::size_t d, double beta = 10.0, std::size_t decoder_layers = 2);

/// Randomly initialized model including the learned-path networks.
TrackerModel random_tracker_model(const CpnDims& dims, std::size_t n_queries, std::size_t svp_levels,
                                  std::size_t pftls_per_level, Rng& rng);

struct LiveTrack {
    Box last_box;
    std::size_t misses = 0;
};

struct TrackerState {
    MemoryBuffer buffer;
    std::map<TrackId, Tensor> dmats;
    std::map<TrackId, LiveTrack> live;
    TrackId next_id = 1;
    std::size_t frame = 0;

    explicit TrackerState(const TrackerConfig& cfg = {}) : buffer(cfg.n_max, cfg.t_max) {}

    /// Throws InvariantError unless buffer, DMATs and live set describe the same tracks.
    void check() const;
};

struct TrackOutput {
    TrackId id = -1;
    Box box;
    double confidence = 0.0;
};

struct StepResult {
    std::vector<TrackOutput> outputs;  ///< sorted by id
    std::vector<QueryEntry> entries;   ///< full decoder output of this frame
    std::vector<TrackId> born;
    std::vector<TrackId> terminated;
};

/// One frame of the oracle-detection path.
StepResult step(const std::vector<Proposal>& proposals, TrackerState& state, const TrackerConfig& cfg,
                const TrackerModel& model);

/// One frame of the learned path: `feature` is [D, H, W]; `previous` (may be
/// null) is the prior frame's feature, fed to the pyramid when present.
StepResult step_features(const Tensor& feature, const Tensor* previous, TrackerState& state,
                         const TrackerConfig& cfg, const TrackerModel& model);

}  // namespace stmmot
