#include "stmmot/mem_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stmmot/errors.hpp"

namespace stmmot {

namespace {

std::string key(std::string_view prefix, std::string_view name) {
    std::string k(prefix);
    k += '.';
    k += name;
    return k;
}

void require_vector(const Tensor& t, std::size_t d, const char* what) { require_shape(t, {d}, what); }

// Stacks window embeddings as values and (embedding + age code) as keys.
std::pair<Tensor, Tensor> window_keys_values(const std::vector<TrackState>& states, const EncoderBlocks& blocks,
                                             const char* op) {
    if (states.empty()) throw std::invalid_argument(std::string(op) + ": empty state window");
    const std::size_t d = blocks.width(), n = states.size();
    Tensor values({n, d}), keys({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        require_vector(states[i].embedding, d, op);
        const Tensor pe = temporal_encoding(n - 1 - i, d);
        for (std::size_t c = 0; c < d; ++c) {
            values(i, c) = states[i].embedding[c];
            keys(i, c) = states[i].embedding[c] + blocks.temporal_pe_scale * pe[c];
        }
    }
    return {std::move(keys), std::move(values)};
}

Tensor as_row(const Tensor& v) { return v.reshaped({1, v.size()}); }

Tensor newest_query(const std::vector<TrackState>& states, const EncoderBlocks& blocks) {
    const std::size_t d = blocks.width();
    return as_row(states.back().embedding + blocks.temporal_pe_scale * temporal_encoding(0, d));
}

Tensor pool(const std::vector<TrackState>& states, std::size_t d, bool take_max) {
    if (states.empty()) throw std::invalid_argument("pool: empty state window");
    Tensor out = states.front().embedding;
    for (std::size_t i = 1; i < states.size(); ++i) {
        require_vector(states[i].embedding, d, "pool");
        for (std::size_t c = 0; c < d; ++c) {
            out[c] = take_max ? std::max(out[c], states[i].embedding[c]) : out[c] + states[i].embedding[c];
        }
    }
    if (!take_max) out = (1.0 / static_cast<double>(states.size())) * out;
    return out;
}

}  // namespace

Aggregation parse_aggregation(std::string_view name) {
    if (name == "ours") return Aggregation::ours;
    if (name == "single") return Aggregation::single;
    if (name == "long-after-short") return Aggregation::long_after_short;
    if (name == "avg-pool") return Aggregation::avg_pool;
    if (name == "max-pool") return Aggregation::max_pool;
    throw std::invalid_argument("unknown aggregation strategy '" + std::string(name) +
                                "' (expected ours, single, long-after-short, avg-pool or max-pool)");
}

std::string to_string(Aggregation a) {
    switch (a) {
        case Aggregation::ours: return "ours";
        case Aggregation::single: return "single";
        case Aggregation::long_after_short: return "long-after-short";
        case Aggregation::avg_pool: return "avg-pool";
        case Aggregation::max_pool: return "max-pool";
    }
    return "ours";
}

EncoderBlocks EncoderBlocks::random(std::size_t d, std::size_t n_heads, Rng& rng, double stddev) {
    EncoderBlocks b;
    b.short_attn = random_attention(d, n_heads, rng, stddev);
    b.long_attn = random_attention(d, n_heads, rng, stddev);
    b.fuse_attn = random_attention(d, n_heads, rng, stddev);
    b.fuse_ffn = Ffn::random(d, 2 * d, 2 * d, rng, stddev);
    b.dmat_init = random_normal({d}, stddev, rng);
    b.validate();
    return b;
}

EncoderBlocks EncoderBlocks::identity(std::size_t d, double beta) {
    EncoderBlocks b;
    b.short_attn = AttentionParams::identity(d, 1);
    b.short_attn.logit_scale = beta;
    b.long_attn = b.short_attn;
    b.fuse_attn = b.short_attn;
    // relu(z) - relu(-z) == z, written once into each output half
    Ffn f{Tensor({2 * d, d}), Tensor({2 * d}), Tensor({2 * d, 2 * d}), Tensor({2 * d})};
    for (std::size_t i = 0; i < d; ++i) {
        f.w1(i, i) = 1.0;
        f.w1(d + i, i) = -1.0;
        f.w2(i, i) = 1.0;
        f.w2(i, d + i) = -1.0;
        f.w2(d + i, i) = 1.0;
        f.w2(d + i, d + i) = -1.0;
    }
    b.fuse_ffn = std::move(f);
    b.dmat_init = Tensor({d});
    b.temporal_pe_scale = 0.0;
    return b;
}

std::size_t EncoderBlocks::horizon() const {
    return strategy == Aggregation::avg_pool || strategy == Aggregation::max_pool ? t_short : t_long;
}

void EncoderBlocks::validate() const {
    short_attn.validate();
    long_attn.validate();
    fuse_attn.validate();
    const std::size_t d = width();
    if (long_attn.d_model != d || fuse_attn.d_model != d) throw std::invalid_argument("EncoderBlocks: width mismatch");
    if (fuse_ffn.w1.rank() != 2 || fuse_ffn.in_width() != d || fuse_ffn.out_width() != 2 * d) {
        throw std::invalid_argument("EncoderBlocks: fusion FFN must map d -> 2d");
    }
    require_vector(dmat_init, d, "EncoderBlocks DMAT token");
    if (t_short == 0 || t_long == 0 || t_short > t_long) {
        throw std::invalid_argument("EncoderBlocks: need 1 <= T_s <= T_l");
    }
    if (!std::isfinite(temporal_pe_scale)) throw std::invalid_argument("EncoderBlocks: non-finite encoding scale");
}

void EncoderBlocks::save(ParamStore& store, std::string_view prefix) const {
    save_attention(short_attn, store, key(prefix, "short"));
    save_attention(long_attn, store, key(prefix, "long"));
    save_attention(fuse_attn, store, key(prefix, "fuse"));
    fuse_ffn.save(store, key(prefix, "fuse_ffn"));
    store.put(key(prefix, "dmat_init"), dmat_init);
    store.put(key(prefix, "temporal_pe_scale"), Tensor::vector({temporal_pe_scale}));
}

EncoderBlocks EncoderBlocks::load(const ParamStore& store, std::string_view prefix) {
    EncoderBlocks b;
    b.short_attn = load_attention(store, key(prefix, "short"));
    b.long_attn = load_attention(store, key(prefix, "long"));
    b.fuse_attn = load_attention(store, key(prefix, "fuse"));
    b.fuse_ffn = Ffn::load(store, key(prefix, "fuse_ffn"));
    b.dmat_init = store.get(key(prefix, "dmat_init"));
    const Tensor& scale = store.get(key(prefix, "temporal_pe_scale"));
    require_shape(scale, {1}, "EncoderBlocks temporal_pe_scale");
    b.temporal_pe_scale = scale[0];
    b.validate();
    return b;
}

Tensor temporal_encoding(std::size_t age, std::size_t d) {
    Tensor pe({d});
    const double a = static_cast<double>(age);
    for (std::size_t i = 0; 2 * i < d; ++i) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
        pe[2 * i] = std::sin(a * freq);
        if (2 * i + 1 < d) pe[2 * i + 1] = std::cos(a * freq);
    }
    return pe;
}

Tensor encode_short(const std::vector<TrackState>& states, const EncoderBlocks& blocks) {
    const auto [keys, values] = window_keys_values(states, blocks, "encode_short");
    return take_row(attend(newest_query(states, blocks), keys, values, blocks.short_attn), 0);
}

Tensor encode_long(const Tensor& dmat, const std::vector<TrackState>& states, const EncoderBlocks& blocks) {
    require_vector(dmat, blocks.width(), "encode_long DMAT");
    const auto [keys, values] = window_keys_values(states, blocks, "encode_long");
    return take_row(attend(as_row(dmat), keys, values, blocks.long_attn), 0);
}

FuseResult fuse(const Tensor& asc, const Tensor& alc, const Tensor& dmat, const EncoderBlocks& blocks) {
    const std::size_t d = blocks.width();
    require_vector(asc, d, "fuse ASC");
    require_vector(alc, d, "fuse ALC");
    require_vector(dmat, d, "fuse DMAT");
    const Tensor kv = concat_rows(as_row(asc), as_row(alc));
    const Tensor z = attend(as_row(dmat), kv, kv, blocks.fuse_attn);
    const Tensor heads = blocks.fuse_ffn.forward(z);
    FuseResult r{Tensor({d}), Tensor({d})};
    for (std::size_t c = 0; c < d; ++c) {
        r.tracklet[c] = heads(0, c);
        r.dmat[c] = heads(0, d + c);
    }
    return r;
}

FuseResult encode_track(const MemoryBuffer& buffer, TrackId id, const Tensor& dmat, const EncoderBlocks& blocks) {
    const std::size_t d = blocks.width();
    switch (blocks.strategy) {
        case Aggregation::ours: {
            const Tensor asc = encode_short(buffer.window(id, blocks.t_short), blocks);
            const Tensor alc = encode_long(dmat, buffer.window(id, blocks.t_long), blocks);
            return fuse(asc, alc, dmat, blocks);
        }
        case Aggregation::single: {
            const auto states = buffer.window(id, blocks.t_long);
            const auto [keys, values] = window_keys_values(states, blocks, "encode_track");
            return {take_row(attend(newest_query(states, blocks), keys, values, blocks.long_attn), 0), dmat};
        }
        case Aggregation::long_after_short: {
            const Tensor asc = encode_short(buffer.window(id, blocks.t_short), blocks);
            const auto [keys, values] = window_keys_values(buffer.window(id, blocks.t_long), blocks, "encode_track");
            return {take_row(attend(as_row(asc), keys, values, blocks.long_attn), 0), dmat};
        }
        case Aggregation::avg_pool: return {pool(buffer.window(id, blocks.t_short), d, false), dmat};
        case Aggregation::max_pool: return {pool(buffer.window(id, blocks.t_short), d, true), dmat};
    }
    throw std::invalid_argument("encode_track: unknown strategy");
}

EncodedTracks encode_all(const MemoryBuffer& buffer, const std::map<TrackId, Tensor>& dmats,
                         const EncoderBlocks& blocks) {
    const std::size_t d = blocks.width();
    EncodedTracks out;
    out.ids = buffer.track_ids();
    out.tracklets = Tensor({out.ids.size(), d});
    for (std::size_t i = 0; i < out.ids.size(); ++i) {
        const TrackId id = out.ids[i];
        const auto it = dmats.find(id);
        if (it == dmats.end()) throw InvariantError("encode_all: live track " + std::to_string(id) + " has no DMAT");
        FuseResult r = encode_track(buffer, id, it->second, blocks);
        for (std::size_t c = 0; c < d; ++c) out.tracklets(i, c) = r.tracklet[c];
        out.dmats.emplace(id, std::move(r.dmat));
    }
    return out;
}

}  // namespace stmmot
