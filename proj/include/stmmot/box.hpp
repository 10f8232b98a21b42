#pragma once

#include <array>

namespace stmmot {

/// Center-size box in normalized image coordinates.
struct Box {
    double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;

    std::array<double, 4> as_array() const { return {cx, cy, w, h}; }
    static Box from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }
    friend bool operator==(const Box&, const Box&) = default;
};

/// Corner form (x1, y1, x2, y2).
struct Corners {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
};

/// MOT-Challenge pixel box: left, top, width, height.
struct PixelBox {
    double left = 0.0, top = 0.0, width = 0.0, height = 0.0;
    friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

struct ImageSize {
    double width = 1.0;
    double height = 1.0;
};

Corners to_corners(const Box& b);
Box from_corners(const Corners& c);

Box normalize(const PixelBox& p, const ImageSize& image);
PixelBox denormalize(const Box& b, const ImageSize& image);

/// Intersection over union; zero-area unions give 0.
double iou(const Box& a, const Box& b);
double iou(const PixelBox& a, const PixelBox& b);

/// Generalized IoU in [-1, 1].
double giou(const Box& a, const Box& b);

}  // namespace stmmot
