#pragma once

#include <cstddef>
#include <vector>

#include "stmmot/tensor.hpp"

namespace stmmot {

/// Weights of one multi-head attention layer.
///
/// Projections follow the `y = x W^T` convention, so every matrix is
/// [d_model, d_model] with rows indexing output channels. Heads split the
/// projected width into contiguous slices of d_model / n_heads.
struct AttentionParams {
    std::size_t d_model = 0;
    std::size_t n_heads = 1;
    Tensor w_q, w_k, w_v, w_o;
    /// Multiplier on q.k logits; 1/sqrt(d_model / n_heads) unless overridden.
    double logit_scale = 0.0;
    /// Optional per-head sink logits. When present each head's softmax also
    /// normalizes over one extra slot with this fixed logit and a zero value,
    /// so the attention mass on real keys can drop below one.
    std::vector<double> sink_logits;

    /// Identity projections with the default scale.
    static AttentionParams identity(std::size_t d_model, std::size_t n_heads);

    std::size_t head_dim() const { return d_model / n_heads; }
    double effective_scale() const;

    /// Throws std::invalid_argument on divisibility or shape violations.
    void validate() const;
};

/// Attention output with the per-head weights that produced it.
struct AttentionTrace {
    Tensor output;      ///< [n_q, d_model]
    Tensor weights;     ///< [n_heads, n_q, n_k]
    Tensor sink_mass;   ///< [n_heads, n_q]; all zero without sinks
};

/// Scaled dot-product multi-head attention: q [n_q, d], k and v [n_k, d].
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionParams& params);

AttentionTrace attend_traced(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionParams& params);

/// Head-averaged attention weights, [n_q, n_k].
Tensor mean_over_heads(const Tensor& per_head);

}  // namespace stmmot
