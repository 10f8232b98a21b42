#include "stmmot/svp.hpp"

#include <stdexcept>
#include <string>

#include "stmmot/spatial.hpp"

namespace stmmot {

namespace {

constexpr std::size_t kPad = 1;

void require_pair(const Tensor& x0, const Tensor& xprev, const char* op) {
    if (x0.rank() != 3 || x0.shape() != xprev.shape()) {
        throw std::invalid_argument(std::string(op) + ": inputs must share a [C,H,W] shape, got " +
                                    shape_string(x0.shape()) + " and " + shape_string(xprev.shape()));
    }
}

std::string key(std::string_view prefix, std::string_view name) {
    std::string k(prefix);
    k += '.';
    k += name;
    return k;
}

}  // namespace

PftlParams PftlParams::random(std::size_t c, Rng& rng, double stddev) {
    PftlParams p;
    p.offset_w = random_normal({2 * taps, 2 * c, kernel, kernel}, stddev, rng);
    p.offset_b = Tensor({2 * taps});
    p.mask_ref_w = random_normal({c, c, kernel, kernel}, stddev, rng);
    p.mask_ref_b = Tensor({c});
    p.mask_cur_w = random_normal({c, c, kernel, kernel}, stddev, rng);
    p.mask_cur_b = Tensor({c});
    p.deform_w = random_normal({c, c, kernel, kernel}, stddev, rng);
    p.deform_b = Tensor({c});
    p.residual_w = random_normal({c, 2 * c, kernel, kernel}, stddev, rng);
    p.residual_b = Tensor({c});
    return p;
}

void PftlParams::validate() const {
    if (deform_w.rank() != 4) throw std::invalid_argument("PftlParams: deform kernel must be rank 4");
    const std::size_t c = deform_w.dim(0);
    require_shape(offset_w, {2 * taps, 2 * c, kernel, kernel}, "PftlParams offset conv");
    require_shape(offset_b, {2 * taps}, "PftlParams offset bias");
    require_shape(mask_ref_w, {c, c, kernel, kernel}, "PftlParams mask conv (reference)");
    require_shape(mask_ref_b, {c}, "PftlParams mask bias (reference)");
    require_shape(mask_cur_w, {c, c, kernel, kernel}, "PftlParams mask conv (current)");
    require_shape(mask_cur_b, {c}, "PftlParams mask bias (current)");
    require_shape(deform_w, {c, c, kernel, kernel}, "PftlParams deform conv");
    require_shape(deform_b, {c}, "PftlParams deform bias");
    require_shape(residual_w, {c, 2 * c, kernel, kernel}, "PftlParams residual conv");
    require_shape(residual_b, {c}, "PftlParams residual bias");
}

void PftlParams::save(ParamStore& store, std::string_view prefix) const {
    store.put(key(prefix, "offset_w"), offset_w);
    store.put(key(prefix, "offset_b"), offset_b);
    store.put(key(prefix, "mask_ref_w"), mask_ref_w);
    store.put(key(prefix, "mask_ref_b"), mask_ref_b);
    store.put(key(prefix, "mask_cur_w"), mask_cur_w);
    store.put(key(prefix, "mask_cur_b"), mask_cur_b);
    store.put(key(prefix, "deform_w"), deform_w);
    store.put(key(prefix, "deform_b"), deform_b);
    store.put(key(prefix, "residual_w"), residual_w);
    store.put(key(prefix, "residual_b"), residual_b);
}

PftlParams PftlParams::load(const ParamStore& store, std::string_view prefix) {
    PftlParams p;
    p.offset_w = store.get(key(prefix, "offset_w"));
    p.offset_b = store.get(key(prefix, "offset_b"));
    p.mask_ref_w = store.get(key(prefix, "mask_ref_w"));
    p.mask_ref_b = store.get(key(prefix, "mask_ref_b"));
    p.mask_cur_w = store.get(key(prefix, "mask_cur_w"));
    p.mask_cur_b = store.get(key(prefix, "mask_cur_b"));
    p.deform_w = store.get(key(prefix, "deform_w"));
    p.deform_b = store.get(key(prefix, "deform_b"));
    p.residual_w = store.get(key(prefix, "residual_w"));
    p.residual_b = store.get(key(prefix, "residual_b"));
    p.validate();
    return p;
}

SvpParams SvpParams::random(std::size_t channels, std::size_t levels, std::size_t pftls_per_level, Rng& rng,
                            double stddev) {
    if (levels == 0 || pftls_per_level == 0) throw std::invalid_argument("SvpParams: M and N must be >= 1");
    SvpParams p;
    p.levels = levels;
    p.pftls_per_level = pftls_per_level;
    for (std::size_t m = 0; m < levels; ++m) {
        std::vector<PftlParams> chain;
        for (std::size_t n = 0; n < pftls_per_level; ++n) chain.push_back(PftlParams::random(channels, rng, stddev));
        p.pftl.push_back(std::move(chain));
    }
    for (std::size_t m = 1; m < levels; ++m) {
        p.down_w.push_back(random_normal({channels, channels, 3, 3}, stddev, rng));
        p.down_b.push_back(Tensor({channels}));
    }
    for (std::size_t m = 0; m + 1 < levels; ++m) {
        p.merge_w.push_back(random_normal({channels, 2 * channels, 3, 3}, stddev, rng));
        p.merge_b.push_back(Tensor({channels}));
    }
    p.validate();
    return p;
}

void SvpParams::validate() const {
    if (levels == 0 || pftls_per_level == 0) throw std::invalid_argument("SvpParams: M and N must be >= 1");
    if (!(upscale > 0.0)) throw std::invalid_argument("SvpParams: upscale factor must be positive");
    if (pftl.size() != levels) throw std::invalid_argument("SvpParams: need one PFTL chain per level");
    for (const auto& chain : pftl) {
        if (chain.size() != pftls_per_level) throw std::invalid_argument("SvpParams: ragged PFTL chains");
        for (const auto& p : chain) p.validate();
    }
    const std::size_t c = channels();
    for (const auto& chain : pftl)
        for (const auto& p : chain)
            if (p.channels() != c) throw std::invalid_argument("SvpParams: PFTL channel widths differ");
    if (down_w.size() != levels - 1 || down_b.size() != levels - 1 || merge_w.size() != levels - 1 ||
        merge_b.size() != levels - 1) {
        throw std::invalid_argument("SvpParams: need M-1 downscale and merge convolutions");
    }
    for (std::size_t i = 0; i + 1 < levels; ++i) {
        require_shape(down_w[i], {c, c, 3, 3}, "SvpParams downscale conv");
        require_shape(down_b[i], {c}, "SvpParams downscale bias");
        require_shape(merge_w[i], {c, 2 * c, 3, 3}, "SvpParams merge conv");
        require_shape(merge_b[i], {c}, "SvpParams merge bias");
    }
}

void SvpParams::save(ParamStore& store, std::string_view prefix) const {
    store.put(key(prefix, "config"), Tensor::vector({static_cast<double>(levels),
                                                     static_cast<double>(pftls_per_level), upscale}));
    for (std::size_t m = 0; m < levels; ++m)
        for (std::size_t n = 0; n < pftls_per_level; ++n)
            pftl[m][n].save(store, key(prefix, "pftl." + std::to_string(m) + "." + std::to_string(n)));
    for (std::size_t i = 0; i + 1 < levels; ++i) {
        store.put(key(prefix, "down_w." + std::to_string(i + 1)), down_w[i]);
        store.put(key(prefix, "down_b." + std::to_string(i + 1)), down_b[i]);
        store.put(key(prefix, "merge_w." + std::to_string(i)), merge_w[i]);
        store.put(key(prefix, "merge_b." + std::to_string(i)), merge_b[i]);
    }
}

SvpParams SvpParams::load(const ParamStore& store, std::string_view prefix) {
    const Tensor& cfg = store.get(key(prefix, "config"));
    require_shape(cfg, {3}, "SvpParams config");
    SvpParams p;
    p.levels = static_cast<std::size_t>(cfg[0]);
    p.pftls_per_level = static_cast<std::size_t>(cfg[1]);
    p.upscale = cfg[2];
    for (std::size_t m = 0; m < p.levels; ++m) {
        std::vector<PftlParams> chain;
        for (std::size_t n = 0; n < p.pftls_per_level; ++n)
            chain.push_back(PftlParams::load(store, key(prefix, "pftl." + std::to_string(m) + "." + std::to_string(n))));
        p.pftl.push_back(std::move(chain));
    }
    for (std::size_t i = 0; i + 1 < p.levels; ++i) {
        p.down_w.push_back(store.get(key(prefix, "down_w." + std::to_string(i + 1))));
        p.down_b.push_back(store.get(key(prefix, "down_b." + std::to_string(i + 1))));
        p.merge_w.push_back(store.get(key(prefix, "merge_w." + std::to_string(i))));
        p.merge_b.push_back(store.get(key(prefix, "merge_b." + std::to_string(i))));
    }
    p.validate();
    return p;
}

Tensor pftl_offsets(const Tensor& x0, const Tensor& xprev, const PftlParams& params) {
    require_pair(x0, xprev, "pftl_offsets");
    return conv2d(concat_channels(x0, xprev), params.offset_w, params.offset_b, 1, kPad);
}

Tensor pftl_mask(const Tensor& x0, const Tensor& xprev, const PftlParams& params) {
    require_pair(x0, xprev, "pftl_mask");
    const Tensor diff = conv2d(x0, params.mask_ref_w, params.mask_ref_b, 1, kPad) -
                        conv2d(xprev, params.mask_cur_w, params.mask_cur_b, 1, kPad);
    const std::size_t C = diff.dim(0), H = diff.dim(1), W = diff.dim(2);
    return softmax(diff.reshaped({C, H * W}), 1).reshaped({C, H, W});
}

Tensor deformable_conv(const Tensor& x, const Tensor& offsets, const Tensor& w, const Tensor& b) {
    if (x.rank() != 3) throw std::invalid_argument("deformable_conv: expected x [C,H,W]");
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    constexpr std::size_t k = PftlParams::kernel;
    if (w.rank() != 4 || w.dim(1) != C || w.dim(2) != k || w.dim(3) != k) {
        throw std::invalid_argument("deformable_conv: weight must be [K, C, 3, 3], got " + shape_string(w.shape()));
    }
    const std::size_t K = w.dim(0);
    require_shape(b, {K}, "deformable_conv bias");
    require_shape(offsets, {2 * PftlParams::taps, H, W}, "deformable_conv offsets");

    Tensor out({K, H, W});
    std::vector<double> samples(C * PftlParams::taps);
    for (std::size_t oy = 0; oy < H; ++oy) {
        for (std::size_t ox = 0; ox < W; ++ox) {
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::size_t t = ky * k + kx;
                    const double sy = static_cast<double>(oy) + static_cast<double>(ky) - static_cast<double>(kPad) +
                                      offsets(2 * t, oy, ox);
                    const double sx = static_cast<double>(ox) + static_cast<double>(kx) - static_cast<double>(kPad) +
                                      offsets(2 * t + 1, oy, ox);
                    for (std::size_t c = 0; c < C; ++c) samples[c * PftlParams::taps + t] = bilinear_at(x, c, sy, sx);
                }
            }
            for (std::size_t kk = 0; kk < K; ++kk) {
                double s = b[kk];
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t ky = 0; ky < k; ++ky)
                        for (std::size_t kx = 0; kx < k; ++kx)
                            s += w(kk, c, ky, kx) * samples[c * PftlParams::taps + ky * k + kx];
                out(kk, oy, ox) = s;
            }
        }
    }
    return out;
}

Tensor pftl_forward(const Tensor& x0, const Tensor& xprev, const PftlParams& params) {
    require_pair(x0, xprev, "pftl_forward");
    if (x0.dim(0) != params.channels()) {
        throw std::invalid_argument("pftl_forward: input has " + std::to_string(x0.dim(0)) +
                                    " channels, PFTL expects " + std::to_string(params.channels()));
    }
    const Tensor offsets = pftl_offsets(x0, xprev, params);
    const Tensor deformed = deformable_conv(xprev, offsets, params.deform_w, params.deform_b);
    const Tensor masked = hadamard(pftl_mask(x0, xprev, params), deformed);
    return x0 + conv2d(concat_channels(x0, masked), params.residual_w, params.residual_b, 1, kPad);
}

std::vector<Tensor> svp_forward(const std::vector<Tensor>& inputs, const SvpParams& params) {
    if (inputs.empty()) throw std::invalid_argument("svp_forward: no input features");
    params.validate();
    const Tensor& ref = inputs[0];
    const Tensor& cur = inputs.size() > 1 ? inputs[1] : inputs[0];
    require_pair(ref, cur, "svp_forward");
    const std::size_t M = params.levels;
    const std::size_t div = std::size_t{1} << (M - 1);
    if (ref.dim(1) % div != 0 || ref.dim(2) % div != 0) {
        throw std::invalid_argument("svp_forward: spatial dims " + shape_string(ref.shape()) +
                                    " not divisible by 2^(M-1) = " + std::to_string(div));
    }

    std::vector<Tensor> refined(M);
    Tensor level_ref = ref, level_cur = cur;
    for (std::size_t m = 0; m < M; ++m) {
        if (m > 0) {
            level_ref = conv2d(level_ref, params.down_w[m - 1], params.down_b[m - 1], 2, 1);
            level_cur = conv2d(level_cur, params.down_w[m - 1], params.down_b[m - 1], 2, 1);
        }
        Tensor prev = level_cur;
        for (const auto& layer : params.pftl[m]) prev = pftl_forward(level_ref, prev, layer);
        refined[m] = std::move(prev);
    }

    std::vector<Tensor> out(M);
    out[M - 1] = refined[M - 1];
    for (std::size_t m = M - 1; m-- > 0;) {
        const Tensor up = bilinear_resize(out[m + 1], params.upscale);
        out[m] = conv2d(concat_channels(up, refined[m]), params.merge_w[m], params.merge_b[m], 1, 1);
    }
    return out;
}

}  // namespace stmmot
