#include "stmmot/cpn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace stmmot {

ObjectQuerySet::ObjectQuerySet(Tensor embeddings, Tensor positions)
    : embeddings_(std::move(embeddings)), positions_(std::move(positions)) {
    if (embeddings_.rank() != 2 || embeddings_.dim(0) == 0) {
        throw std::invalid_argument("ObjectQuerySet: embeddings must be a non-empty [N, d] tensor");
    }
    require_shape(positions_, embeddings_.shape(), "ObjectQuerySet positions");
    const std::size_t n = embeddings_.dim(0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double dist2 = 0.0;
            const auto a = embeddings_.row(i), b = embeddings_.row(j);
            for (std::size_t c = 0; c < a.size(); ++c) dist2 += (a[c] - b[c]) * (a[c] - b[c]);
            if (!(dist2 > 0.0)) {
                throw std::invalid_argument("ObjectQuerySet: queries " + std::to_string(i) + " and " +
                                            std::to_string(j) + " are identical");
            }
        }
    }
}

ObjectQuerySet ObjectQuerySet::random(std::size_t count, std::size_t d, Rng& rng, double stddev) {
    Tensor emb = random_normal({count, d}, stddev, rng);
    Tensor pos = random_normal({count, d}, stddev, rng);
    return ObjectQuerySet(std::move(emb), std::move(pos));
}

CpnParams CpnParams::random(const CpnDims& dims, Rng& rng) {
    CpnParams p;
    p.d_model = dims.d_model;
    p.input_w = random_normal({dims.d_model, dims.feature_channels}, 0.02, rng);
    p.input_b = Tensor({dims.d_model});
    for (std::size_t i = 0; i < dims.encoder_layers; ++i)
        p.encoder.push_back(EncoderLayerParams::random(dims.d_model, dims.n_heads, dims.ffn_hidden, rng));
    for (std::size_t i = 0; i < dims.decoder_layers; ++i)
        p.decoder.push_back(DecoderLayerParams::random(dims.d_model, dims.n_heads, dims.ffn_hidden, rng));
    p.box_w = random_normal({4, dims.d_model}, 0.02, rng);
    p.box_b = Tensor({4});
    p.obj_w = random_normal({1, dims.d_model}, 0.02, rng);
    p.obj_b = Tensor({1});
    p.validate();
    return p;
}

void CpnParams::validate() const {
    if (encoder.empty() || decoder.empty()) throw std::invalid_argument("CpnParams: layer counts must be >= 1");
    if (input_w.rank() != 2 || input_w.dim(0) != d_model) throw std::invalid_argument("CpnParams: bad input projection");
    require_shape(input_b, {d_model}, "CpnParams input bias");
    for (const auto& l : encoder) {
        if (l.self_attn.d_model != d_model) throw std::invalid_argument("CpnParams: encoder width mismatch");
    }
    for (const auto& l : decoder) {
        if (l.self_attn.d_model != d_model || l.cross_attn.d_model != d_model) {
            throw std::invalid_argument("CpnParams: decoder width mismatch");
        }
    }
    require_shape(box_w, {4, d_model}, "CpnParams box head");
    require_shape(box_b, {4}, "CpnParams box bias");
    require_shape(obj_w, {1, d_model}, "CpnParams objectness head");
    require_shape(obj_b, {1}, "CpnParams objectness bias");
}

void CpnParams::save(ParamStore& store, std::string_view prefix) const {
    const std::string p(prefix);
    store.put(p + ".input_w", input_w);
    store.put(p + ".input_b", input_b);
    for (std::size_t i = 0; i < encoder.size(); ++i) encoder[i].save(store, p + ".encoder." + std::to_string(i));
    for (std::size_t i = 0; i < decoder.size(); ++i) decoder[i].save(store, p + ".decoder." + std::to_string(i));
    store.put(p + ".box_w", box_w);
    store.put(p + ".box_b", box_b);
    store.put(p + ".obj_w", obj_w);
    store.put(p + ".obj_b", obj_b);
}

CpnParams CpnParams::load(const ParamStore& store, std::string_view prefix) {
    const std::string p(prefix);
    CpnParams out;
    out.input_w = store.get(p + ".input_w");
    out.input_b = store.get(p + ".input_b");
    out.d_model = out.input_w.rank() == 2 ? out.input_w.dim(0) : 0;
    for (std::size_t i = 0; store.contains(p + ".encoder." + std::to_string(i) + ".self_attn.w_q"); ++i)
        out.encoder.push_back(EncoderLayerParams::load(store, p + ".encoder." + std::to_string(i)));
    for (std::size_t i = 0; store.contains(p + ".decoder." + std::to_string(i) + ".self_attn.w_q"); ++i)
        out.decoder.push_back(DecoderLayerParams::load(store, p + ".decoder." + std::to_string(i)));
    out.box_w = store.get(p + ".box_w");
    out.box_b = store.get(p + ".box_b");
    out.obj_w = store.get(p + ".obj_w");
    out.obj_b = store.get(p + ".obj_b");
    out.validate();
    return out;
}

Tensor positional_encoding(std::size_t height, std::size_t width, std::size_t d) {
    if (d == 0 || d % 4 != 0) {
        throw std::invalid_argument("positional_encoding: d = " + std::to_string(d) + " is not divisible by 4");
    }
    const std::size_t half = d / 2, pairs = d / 4;
    Tensor pe({height * width, d});
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t r = y * width + x;
            for (std::size_t i = 0; i < pairs; ++i) {
                const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(half));
                pe(r, 2 * i) = std::sin(static_cast<double>(y) * freq);
                pe(r, 2 * i + 1) = std::cos(static_cast<double>(y) * freq);
                pe(r, half + 2 * i) = std::sin(static_cast<double>(x) * freq);
                pe(r, half + 2 * i + 1) = std::cos(static_cast<double>(x) * freq);
            }
        }
    }
    return pe;
}

EncodedFrame encode_frame(const Tensor& f0, const CpnParams& params) {
    if (f0.rank() != 3) throw std::invalid_argument("encode_frame: expected a [D, H, W] feature map");
    const std::size_t D = f0.dim(0), H = f0.dim(1), W = f0.dim(2);
    if (params.input_w.dim(1) != D) {
        throw std::invalid_argument("encode_frame: feature map has " + std::to_string(D) +
                                    " channels, input projection expects " + std::to_string(params.input_w.dim(1)));
    }
    // [D, HW] -> [HW, D] sequence
    const Tensor seq = transpose(f0.reshaped({D, H * W}));
    EncodedFrame frame{linear(seq, params.input_w, &params.input_b), positional_encoding(H, W, params.d_model), H, W};
    for (const auto& layer : params.encoder) frame.features = encoder_layer_forward(frame.features, frame.positions, layer);
    return frame;
}

ProposeTrace propose_traced(const EncodedFrame& frame, const ObjectQuerySet& queries, const CpnParams& params) {
    const std::size_t d = params.d_model;
    if (queries.width() != d || frame.features.rank() != 2 || frame.features.dim(1) != d) {
        throw std::invalid_argument("propose: width mismatch between queries, frame features and parameters");
    }
    require_shape(frame.positions, frame.features.shape(), "propose frame positions");

    ProposeTrace trace;
    Tensor tgt = queries.embeddings();
    for (const auto& layer : params.decoder) {
        DecoderLayerTrace lt = decoder_layer_forward(tgt, queries.positions(), frame.features, frame.positions, layer);
        tgt = std::move(lt.output);
        trace.cross_summands.push_back(std::move(lt.cross_summand));
    }

    const Tensor boxes = linear(tgt, params.box_w, &params.box_b);
    const Tensor obj = linear(tgt, params.obj_w, &params.obj_b);
    trace.proposals.reserve(queries.count());
    for (std::size_t i = 0; i < queries.count(); ++i) {
        Proposal p;
        p.embedding = take_row(tgt, i);
        p.box = {sigmoid(boxes(i, 0)), sigmoid(boxes(i, 1)), sigmoid(boxes(i, 2)), sigmoid(boxes(i, 3))};
        p.objectness = sigmoid(obj(i, 0));
        trace.proposals.push_back(std::move(p));
    }
    return trace;
}

std::vector<Proposal> propose(const EncodedFrame& frame, const ObjectQuerySet& queries, const CpnParams& params) {
    return propose_traced(frame, queries, params).proposals;
}

}  // namespace stmmot
