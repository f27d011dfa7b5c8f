#include "detkit/core/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace detkit {

bool is_valid_box(const Box& b) {
    return std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) &&
           std::isfinite(b.y2) && b.x1 <= b.x2 && b.y1 <= b.y2;
}

bool is_valid_size(const ImageSize& s) {
    return s.width >= 1 && s.height >= 1;
}

double box_intersection(const Box& a, const Box& b) {
    const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

double box_iou(const Box& a, const Box& b) {
    const double inter = box_intersection(a, b);
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

double box_iof(const Box& a, const Box& b) {
    const double denom = a.area();
    if (denom <= 0.0) return 0.0;
    return box_intersection(a, b) / denom;
}

Box hflip_box(const Box& b, const ImageSize& size) {
    const double w = double(size.width);
    return Box{w - b.x2, b.y1, w - b.x1, b.y2};
}

Box rescale_box(const Box& b, double factor) {
    return Box{b.x1 * factor, b.y1 * factor, b.x2 * factor, b.y2 * factor};
}

Box clip_box(const Box& b, const ImageSize& size) {
    const double w = double(size.width);
    const double h = double(size.height);
    return Box{std::clamp(b.x1, 0.0, w), std::clamp(b.y1, 0.0, h),
               std::clamp(b.x2, 0.0, w), std::clamp(b.y2, 0.0, h)};
}

std::vector<double> box_iou_matrix(const std::vector<Box>& a, const std::vector<Box>& b) {
    const std::ptrdiff_t na = std::ptrdiff_t(a.size());
    const std::ptrdiff_t nb = std::ptrdiff_t(b.size());
    std::vector<double> out(std::size_t(na) * std::size_t(nb));
#pragma omp parallel for schedule(static) if (na * nb > 4096)
    for (std::ptrdiff_t i = 0; i < na; ++i) {
        for (std::ptrdiff_t j = 0; j < nb; ++j) {
            out[std::size_t(i) * std::size_t(nb) + std::size_t(j)] = box_iou(a[i], b[j]);
        }
    }
    return out;
}

bool box_less(const Box& a, const Box& b) {
    if (a.x1 != b.x1) return a.x1 < b.x1;
    if (a.y1 != b.y1) return a.y1 < b.y1;
    if (a.x2 != b.x2) return a.x2 < b.x2;
    return a.y2 < b.y2;
}

}  // namespace detkit
