#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "stmmot/box.hpp"
#include "stmmot/params.hpp"
#include "stmmot/tensor.hpp"
#include "stmmot/transformer.hpp"

namespace stmmot {

/// Learned object queries of the candidate proposal network.
class ObjectQuerySet {
public:
    /// Both tensors [N, d]; throws std::invalid_argument if any two embedding
    /// rows coincide (minimum pairwise L2 distance must be > 0).
    ObjectQuerySet(Tensor embeddings, Tensor positions);

    static ObjectQuerySet random(std::size_t count, std::size_t d, Rng& rng, double stddev = 1.0);

    std::size_t count() const { return embeddings_.dim(0); }
    std::size_t width() const { return embeddings_.dim(1); }
    const Tensor& embeddings() const { return embeddings_; }
    const Tensor& positions() const { return positions_; }

private:
    Tensor embeddings_;
    Tensor positions_;
};

struct Proposal {
    Tensor embedding;  ///< [d]
    Box box;           ///< normalized (cx, cy, w, h)
    double objectness = 0.0;
};

/// Encoder output together with the spatial grid it came from.
struct EncodedFrame {
    Tensor features;   ///< [H*W, d]
    Tensor positions;  ///< [H*W, d]
    std::size_t height = 0;
    std::size_t width = 0;
};

struct CpnDims {
    std::size_t feature_channels = 16;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t encoder_layers = 2;
    std::size_t decoder_layers = 2;
    std::size_t ffn_hidden = 128;
};

struct CpnParams {
    std::size_t d_model = 0;
    Tensor input_w;  ///< [d, D]
    Tensor input_b;  ///< [d]
    std::vector<EncoderLayerParams> encoder;
    std::vector<DecoderLayerParams> decoder;
    Tensor box_w, box_b;  ///< [4, d], [4]
    Tensor obj_w, obj_b;  ///< [1, d], [1]

    /// Normal(0, 0.02) weights, unit LayerNorms, zero biases.
    static CpnParams random(const CpnDims& dims, Rng& rng);
    void validate() const;
    void save(ParamStore& store, std::string_view prefix = "cpn") const;
    static CpnParams load(const ParamStore& store, std::string_view prefix = "cpn");
};

/// Fixed 2-D sinusoidal encoding, [H*W, d]. The first d/2 channels encode the
/// row, the last d/2 the column, each as interleaved (sin, cos) pairs.
Tensor positional_encoding(std::size_t height, std::size_t width, std::size_t d);

/// f0 [D, H, W] -> input projection, then the encoder stack.
EncodedFrame encode_frame(const Tensor& f0, const CpnParams& params);

std::vector<Proposal> propose(const EncodedFrame& frame, const ObjectQuerySet& queries, const CpnParams& params);

struct ProposeTrace {
    std::vector<Proposal> proposals;
    std::vector<Tensor> cross_summands;  ///< one [N, d] per decoder layer
};

ProposeTrace propose_traced(const EncodedFrame& frame, const ObjectQuerySet& queries, const CpnParams& params);

}  // namespace stmmot
