#pragma once

#include <string_view>

#include "stmmot/attention.hpp"
#include "stmmot/params.hpp"
#include "stmmot/tensor.hpp"

namespace stmmot {

/// Post-norm encoder layer: self-attention then FFN, each with residual + LayerNorm.
struct EncoderLayerParams {
    AttentionParams self_attn;
    Ffn ffn;
    LayerNormParams norm1, norm2;

    static EncoderLayerParams random(std::size_t d, std::size_t heads, std::size_t hidden, Rng& rng);
    void save(ParamStore& store, std::string_view prefix) const;
    static EncoderLayerParams load(const ParamStore& store, std::string_view prefix);
};

/// Post-norm decoder layer: self-attention, cross-attention, FFN.
struct DecoderLayerParams {
    AttentionParams self_attn, cross_attn;
    Ffn ffn;
    LayerNormParams norm1, norm2, norm3;

    static DecoderLayerParams random(std::size_t d, std::size_t heads, std::size_t hidden, Rng& rng);
    void save(ParamStore& store, std::string_view prefix) const;
    static DecoderLayerParams load(const ParamStore& store, std::string_view prefix);
};

/// x [n,d] with positions pos [n,d] added to queries and keys only.
Tensor encoder_layer_forward(const Tensor& x, const Tensor& pos, const EncoderLayerParams& layer);

/// Intermediate values of one decoder layer, kept for inspection.
struct DecoderLayerTrace {
    Tensor output;
    Tensor cross_summand;   ///< cross-attention output before the residual add
    AttentionTrace cross;   ///< weights of the cross-attention
};

/// tgt [n,d] with query positions qpos; memory [m,d] with positions mpos.
DecoderLayerTrace decoder_layer_forward(const Tensor& tgt, const Tensor& qpos, const Tensor& memory,
                                        const Tensor& mpos, const DecoderLayerParams& layer);

}  // namespace stmmot
