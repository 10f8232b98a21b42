#include "stmmot/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>

namespace stmmot {

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
    if (x.rank() != 3 || w.rank() != 4) throw std::invalid_argument("conv2d: expected x [C,H,W] and w [K,C,kh,kw]");
    if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const std::size_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != C) {
        throw std::invalid_argument("conv2d: weight expects " + std::to_string(w.dim(1)) + " channels, input has " +
                                    std::to_string(C));
    }
    require_shape(b, {K}, "conv2d bias");
    if (kh > H + 2 * pad || kw > W + 2 * pad || kh == 0 || kw == 0) {
        throw std::invalid_argument("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                    " does not fit padded input " + shape_string(x.shape()));
    }
    const std::size_t Ho = (H + 2 * pad - kh) / stride + 1;
    const std::size_t Wo = (W + 2 * pad - kw) / stride + 1;

    Tensor out({K, Ho, Wo});
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                double s = b[k];
                for (std::size_t c = 0; c < C; ++c) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const auto ix =
                                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                            s += w(k, c, ky, kx) * x(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                        }
                    }
                }
                out(k, oy, ox) = s;
            }
        }
    }
    return out;
}

double bilinear_at(const Tensor& x, std::size_t channel, double y, double xpos) {
    const auto H = static_cast<std::ptrdiff_t>(x.dim(1));
    const auto W = static_cast<std::ptrdiff_t>(x.dim(2));
    const double fy = std::floor(y), fx = std::floor(xpos);
    // Far outside the grid every neighbor is padding; also keeps the casts below in range.
    if (fy < -1.0 || fx < -1.0 || fy > static_cast<double>(H) || fx > static_cast<double>(W)) return 0.0;
    const auto y0 = static_cast<std::ptrdiff_t>(fy), x0 = static_cast<std::ptrdiff_t>(fx);
    const double ty = y - fy, tx = xpos - fx;
    auto at = [&](std::ptrdiff_t yy, std::ptrdiff_t xx) -> double {
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
        return x(channel, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
    };
    double v = (1.0 - ty) * (1.0 - tx) * at(y0, x0);
    if (tx != 0.0) v += (1.0 - ty) * tx * at(y0, x0 + 1);
    if (ty != 0.0) v += ty * (1.0 - tx) * at(y0 + 1, x0);
    if (ty != 0.0 && tx != 0.0) v += ty * tx * at(y0 + 1, x0 + 1);
    return v;
}

Tensor bilinear_sample(const Tensor& x, std::span<const SamplePoint> points) {
    if (x.rank() != 3) throw std::invalid_argument("bilinear_sample: expected [C,H,W]");
    const std::size_t C = x.dim(0);
    Tensor out({C, points.size()});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < points.size(); ++i) out(c, i) = bilinear_at(x, c, points[i].y, points[i].x);
    return out;
}

Tensor bilinear_resize(const Tensor& x, double factor) {
    if (x.rank() != 3) throw std::invalid_argument("bilinear_resize: expected [C,H,W]");
    if (!(factor > 0.0) || !std::isfinite(factor)) throw std::invalid_argument("bilinear_resize: factor must be > 0");
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const auto Ho = static_cast<std::size_t>(std::floor(static_cast<double>(H) * factor));
    const auto Wo = static_cast<std::size_t>(std::floor(static_cast<double>(W) * factor));
    if (Ho == 0 || Wo == 0) {
        throw std::invalid_argument("bilinear_resize: factor " + std::to_string(factor) + " gives an empty output for " +
                                    shape_string(x.shape()));
    }
    const double sy = static_cast<double>(H) / static_cast<double>(Ho);
    const double sx = static_cast<double>(W) / static_cast<double>(Wo);

    // Source coordinate of output pixel centers, clamped to the grid (edge replication).
    auto source = [](std::size_t o, double scale, std::size_t n) {
        double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(n - 1));
        const auto i0 = static_cast<std::size_t>(std::floor(s));
        const std::size_t i1 = std::min(i0 + 1, n - 1);
        return std::tuple{i0, i1, s - static_cast<double>(i0)};
    };

    Tensor out({C, Ho, Wo});
    for (std::size_t oy = 0; oy < Ho; ++oy) {
        const auto [y0, y1, ty] = source(oy, sy, H);
        for (std::size_t ox = 0; ox < Wo; ++ox) {
            const auto [x0, x1, tx] = source(ox, sx, W);
            for (std::size_t c = 0; c < C; ++c) {
                const double top = x(c, y0, x0) + tx * (x(c, y0, x1) - x(c, y0, x0));
                const double bottom = x(c, y1, x0) + tx * (x(c, y1, x1) - x(c, y1, x0));
                out(c, oy, ox) = top + ty * (bottom - top);
            }
        }
    }
    return out;
}

}  // namespace stmmot
