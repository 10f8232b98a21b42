#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stmmot/attention.hpp"
#include "stmmot/memory.hpp"
#include "stmmot/params.hpp"
#include "stmmot/tensor.hpp"

namespace stmmot {

/// How a track's history is condensed into its tracklet query.
enum class Aggregation {
    ours,             ///< short-term block, long-term DMAT block, fusion block
    single,           ///< latest state attends over the long window
    long_after_short, ///< short-term context attends over the long window
    avg_pool,         ///< elementwise mean over the short window
    max_pool,         ///< elementwise max over the short window
};

Aggregation parse_aggregation(std::string_view name);
std::string to_string(Aggregation a);

struct EncoderBlocks {
    AttentionParams short_attn;  ///< b_s
    AttentionParams long_attn;   ///< b_l
    AttentionParams fuse_attn;   ///< b_f
    Ffn fuse_ffn;                ///< d -> 2d; first half tracklet, second half DMAT
    Tensor dmat_init;            ///< [d], shared by every newborn track
    std::size_t t_short = 5;
    std::size_t t_long = 25;
    double temporal_pe_scale = 1.0;
    Aggregation strategy = Aggregation::ours;

    static EncoderBlocks random(std::size_t d, std::size_t n_heads, Rng& rng, double stddev = 0.02);
    /// Identity projections, logit scale `beta`, a fusion FFN whose two heads
    /// both pass the attended vector through, zero DMAT token, no temporal encoding.
    static EncoderBlocks identity(std::size_t d, double beta);

    std::size_t width() const { return short_attn.d_model; }
    /// Longest window the current strategy reads.
    std::size_t horizon() const;
    void validate() const;

    void save(ParamStore& store, std::string_view prefix = "memory") const;
    static EncoderBlocks load(const ParamStore& store, std::string_view prefix = "memory");
};

/// Sinusoidal code of a relative age (0 = most recent), [d].
Tensor temporal_encoding(std::size_t age, std::size_t d);

/// Aggregated short-term context: the newest state queries the window.
Tensor encode_short(const std::vector<TrackState>& states, const EncoderBlocks& blocks);

/// Aggregated long-term context: the DMAT token queries the window.
Tensor encode_long(const Tensor& dmat, const std::vector<TrackState>& states, const EncoderBlocks& blocks);

struct FuseResult {
    Tensor tracklet;  ///< [d]
    Tensor dmat;      ///< [d]
};

FuseResult fuse(const Tensor& asc, const Tensor& alc, const Tensor& dmat, const EncoderBlocks& blocks);

/// Tracklet query and updated DMAT for one track under `blocks.strategy`.
FuseResult encode_track(const MemoryBuffer& buffer, TrackId id, const Tensor& dmat, const EncoderBlocks& blocks);

struct EncodedTracks {
    std::vector<TrackId> ids;        ///< buffer admission order
    Tensor tracklets;                ///< [N, d], row i belongs to ids[i]
    std::map<TrackId, Tensor> dmats; ///< updated tokens for every live track
};

/// Encodes every live track independently. Throws InvariantError if a live
/// track has no DMAT.
EncodedTracks encode_all(const MemoryBuffer& buffer, const std::map<TrackId, Tensor>& dmats,
                         const EncoderBlocks& blocks);

}  // namespace stmmot
