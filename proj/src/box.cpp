#include "stmmot/box.hpp"

#include <algorithm>

namespace stmmot {

namespace {

double corner_iou(const Corners& a, const Corners& b) {
    const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = iw * ih;
    const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

Corners pixel_corners(const PixelBox& p) { return {p.left, p.top, p.left + p.width, p.top + p.height}; }

}  // namespace

Corners to_corners(const Box& b) {
    return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

Box from_corners(const Corners& c) {
    return {0.5 * (c.x1 + c.x2), 0.5 * (c.y1 + c.y2), c.x2 - c.x1, c.y2 - c.y1};
}

Box normalize(const PixelBox& p, const ImageSize& image) {
    return {(p.left + 0.5 * p.width) / image.width, (p.top + 0.5 * p.height) / image.height, p.width / image.width,
            p.height / image.height};
}

PixelBox denormalize(const Box& b, const ImageSize& image) {
    const double w = b.w * image.width, h = b.h * image.height;
    return {b.cx * image.width - 0.5 * w, b.cy * image.height - 0.5 * h, w, h};
}

double iou(const Box& a, const Box& b) { return corner_iou(to_corners(a), to_corners(b)); }

double iou(const PixelBox& a, const PixelBox& b) { return corner_iou(pixel_corners(a), pixel_corners(b)); }

double giou(const Box& a, const Box& b) {
    const Corners ca = to_corners(a), cb = to_corners(b);
    const double iw = std::max(0.0, std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1));
    const double ih = std::max(0.0, std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1));
    const double inter = iw * ih;
    const double uni = a.w * a.h + b.w * b.h - inter;
    const double enclosure = (std::max(ca.x2, cb.x2) - std::min(ca.x1, cb.x1)) *
                             (std::max(ca.y2, cb.y2) - std::min(ca.y1, cb.y1));
    if (enclosure <= 0.0) return 0.0;
    const double iou_value = uni > 0.0 ? inter / uni : 0.0;
    return iou_value - (enclosure - uni) / enclosure;
}

}  // namespace stmmot
