#pragma once

#include <cstddef>
#include <span>

#include "stmmot/tensor.hpp"

namespace stmmot {

/// Sub-pixel sampling location in (row, column) grid units.
struct SamplePoint {
    double y = 0.0;
    double x = 0.0;
};

/// Zero-padded cross-correlation. x [C,H,W], w [K,C,kh,kw], b [K].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);

/// Align-corners-false bilinear resize to [C, floor(H*factor), floor(W*factor)].
Tensor bilinear_resize(const Tensor& x, double factor);

/// Bilinear samples of every channel at each point; neighbors outside the
/// grid contribute zero. Returns [C, points.size()].
Tensor bilinear_sample(const Tensor& x, std::span<const SamplePoint> points);

/// Single-channel, single-point form of bilinear_sample.
double bilinear_at(const Tensor& x, std::size_t channel, double y, double xpos);

}  // namespace stmmot
