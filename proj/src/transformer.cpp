#include "stmmot/transformer.hpp"

#include <string>

namespace stmmot {

namespace {

std::string key(std::string_view prefix, std::string_view name) {
    std::string k(prefix);
    k += '.';
    k += name;
    return k;
}

}  // namespace

EncoderLayerParams EncoderLayerParams::random(std::size_t d, std::size_t heads, std::size_t hidden, Rng& rng) {
    EncoderLayerParams l;
    l.self_attn = random_attention(d, heads, rng);
    l.ffn = Ffn::random(d, hidden, d, rng);
    l.norm1 = LayerNormParams::unit(d);
    l.norm2 = LayerNormParams::unit(d);
    return l;
}

void EncoderLayerParams::save(ParamStore& store, std::string_view prefix) const {
    save_attention(self_attn, store, key(prefix, "self_attn"));
    ffn.save(store, key(prefix, "ffn"));
    norm1.save(store, key(prefix, "norm1"));
    norm2.save(store, key(prefix, "norm2"));
}

EncoderLayerParams EncoderLayerParams::load(const ParamStore& store, std::string_view prefix) {
    return {load_attention(store, key(prefix, "self_attn")), Ffn::load(store, key(prefix, "ffn")),
            LayerNormParams::load(store, key(prefix, "norm1")), LayerNormParams::load(store, key(prefix, "norm2"))};
}

DecoderLayerParams DecoderLayerParams::random(std::size_t d, std::size_t heads, std::size_t hidden, Rng& rng) {
    DecoderLayerParams l;
    l.self_attn = random_attention(d, heads, rng);
    l.cross_attn = random_attention(d, heads, rng);
    l.ffn = Ffn::random(d, hidden, d, rng);
    l.norm1 = LayerNormParams::unit(d);
    l.norm2 = LayerNormParams::unit(d);
    l.norm3 = LayerNormParams::unit(d);
    return l;
}

void DecoderLayerParams::save(ParamStore& store, std::string_view prefix) const {
    save_attention(self_attn, store, key(prefix, "self_attn"));
    save_attention(cross_attn, store, key(prefix, "cross_attn"));
    ffn.save(store, key(prefix, "ffn"));
    norm1.save(store, key(prefix, "norm1"));
    norm2.save(store, key(prefix, "norm2"));
    norm3.save(store, key(prefix, "norm3"));
}

DecoderLayerParams DecoderLayerParams::load(const ParamStore& store, std::string_view prefix) {
    return {load_attention(store, key(prefix, "self_attn")), load_attention(store, key(prefix, "cross_attn")),
            Ffn::load(store, key(prefix, "ffn")),           LayerNormParams::load(store, key(prefix, "norm1")),
            LayerNormParams::load(store, key(prefix, "norm2")), LayerNormParams::load(store, key(prefix, "norm3"))};
}

Tensor encoder_layer_forward(const Tensor& x, const Tensor& pos, const EncoderLayerParams& layer) {
    const Tensor qk = x + pos;
    Tensor h = layer.norm1.forward(x + attend(qk, qk, x, layer.self_attn));
    return layer.norm2.forward(h + layer.ffn.forward(h));
}

DecoderLayerTrace decoder_layer_forward(const Tensor& tgt, const Tensor& qpos, const Tensor& memory,
                                        const Tensor& mpos, const DecoderLayerParams& layer) {
    const Tensor q = tgt + qpos;
    Tensor h = layer.norm1.forward(tgt + attend(q, q, tgt, layer.self_attn));
    AttentionTrace cross = attend_traced(h + qpos, memory + mpos, memory, layer.cross_attn);
    Tensor summand = cross.output;
    h = layer.norm2.forward(h + summand);
    h = layer.norm3.forward(h + layer.ffn.forward(h));
    return {std::move(h), std::move(summand), std::move(cross)};
}

}  // namespace stmmot
