#pragma once

#include <vector>

namespace detkit {

// Axis-aligned box in absolute pixel coordinates, origin top-left.
// Coordinates are continuous; area carries no +1 convention.
struct Box {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }

    bool operator==(const Box&) const = default;
};

struct ImageSize {
    int width = 0;
    int height = 0;

    bool operator==(const ImageSize&) const = default;
};

bool is_valid_box(const Box& b);
bool is_valid_size(const ImageSize& s);

double box_intersection(const Box& a, const Box& b);

// Intersection over union; 0 when the union has zero area.
double box_iou(const Box& a, const Box& b);

// Intersection over the area of `a` (used for crowd-region matching).
double box_iof(const Box& a, const Box& b);

// Mirror about the vertical canvas axis: x' = width - x, endpoints swapped.
Box hflip_box(const Box& b, const ImageSize& size);

Box rescale_box(const Box& b, double factor);

Box clip_box(const Box& b, const ImageSize& size);

// Row-major [a.size() x b.size()] pairwise IoU.
std::vector<double> box_iou_matrix(const std::vector<Box>& a, const std::vector<Box>& b);

// Lexicographic ordering (x1, y1, x2, y2).
bool box_less(const Box& a, const Box& b);

}  // namespace detkit
