#include "stmmot/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace stmmot {

AttentionParams AttentionParams::identity(std::size_t d_model, std::size_t n_heads) {
    AttentionParams p;
    p.d_model = d_model;
    p.n_heads = n_heads;
    p.w_q = p.w_k = p.w_v = p.w_o = Tensor::identity(d_model);
    return p;
}

double AttentionParams::effective_scale() const {
    return logit_scale > 0.0 ? logit_scale : 1.0 / std::sqrt(static_cast<double>(head_dim()));
}

void AttentionParams::validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
        throw std::invalid_argument("AttentionParams: d_model " + std::to_string(d_model) +
                                    " not divisible by n_heads " + std::to_string(n_heads));
    }
    for (const Tensor* w : {&w_q, &w_k, &w_v, &w_o}) require_shape(*w, {d_model, d_model}, "attention projection");
    if (!sink_logits.empty() && sink_logits.size() != n_heads) {
        throw std::invalid_argument("AttentionParams: sink_logits needs one entry per head");
    }
}

AttentionTrace attend_traced(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionParams& params) {
    params.validate();
    const std::size_t d = params.d_model;
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != d || k.dim(1) != d || v.dim(1) != d) {
        throw std::invalid_argument("attend: expected rows of width " + std::to_string(d) + ", got q " +
                                    shape_string(q.shape()) + " k " + shape_string(k.shape()) + " v " +
                                    shape_string(v.shape()));
    }
    if (k.dim(0) != v.dim(0)) throw std::invalid_argument("attend: key and value row counts differ");

    const std::size_t nq = q.dim(0), nk = k.dim(0), heads = params.n_heads, hd = params.head_dim();
    const double scale = params.effective_scale();
    const bool has_sink = !params.sink_logits.empty();
    if (nk == 0 && !has_sink) throw std::invalid_argument("attend: no keys");

    const Tensor qp = linear(q, params.w_q);
    const Tensor kp = linear(k, params.w_k);
    const Tensor vp = linear(v, params.w_v);

    AttentionTrace trace{Tensor({nq, d}), Tensor({heads, nq, nk}), Tensor({heads, nq})};
    Tensor concat({nq, d});
    std::vector<double> logits(nk);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * hd;
        for (std::size_t i = 0; i < nq; ++i) {
            double mx = has_sink ? params.sink_logits[h] : -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < nk; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < hd; ++c) s += qp(i, off + c) * kp(j, off + c);
                logits[j] = s * scale;
                mx = std::max(mx, logits[j]);
            }
            double total = has_sink ? std::exp(params.sink_logits[h] - mx) : 0.0;
            const double sink_term = total;
            for (std::size_t j = 0; j < nk; ++j) {
                logits[j] = std::exp(logits[j] - mx);
                total += logits[j];
            }
            trace.sink_mass(h, i) = sink_term / total;
            for (std::size_t j = 0; j < nk; ++j) {
                const double w = logits[j] / total;
                trace.weights(h, i, j) = w;
                for (std::size_t c = 0; c < hd; ++c) concat(i, off + c) += w * vp(j, off + c);
            }
        }
    }
    trace.output = linear(concat, params.w_o);
    return trace;
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionParams& params) {
    return attend_traced(q, k, v, params).output;
}

Tensor mean_over_heads(const Tensor& per_head) {
    if (per_head.rank() != 3) throw std::invalid_argument("mean_over_heads: expected [heads, n_q, n_k]");
    const std::size_t heads = per_head.dim(0), nq = per_head.dim(1), nk = per_head.dim(2);
    Tensor out({nq, nk});
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < nq; ++i)
            for (std::size_t j = 0; j < nk; ++j) out(i, j) += per_head(h, i, j) / static_cast<double>(heads);
    return out;
}

}  // namespace stmmot
