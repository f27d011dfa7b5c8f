#pragma once

#include <cstdint>
#include <vector>

#include "detkit/core/geometry.hpp"

namespace detkit {

// Dense binary grid, row-major storage.
struct Bitmap {
    ImageSize size;
    std::vector<std::uint8_t> data;  // size.width * size.height entries

    Bitmap() = default;
    explicit Bitmap(ImageSize s)
        : size(s), data(std::size_t(s.width) * std::size_t(s.height), 0) {}

    std::uint8_t at(int x, int y) const {
        return data[std::size_t(y) * std::size_t(size.width) + std::size_t(x)];
    }
    void set(int x, int y, bool v) {
        data[std::size_t(y) * std::size_t(size.width) + std::size_t(x)] = v ? 1 : 0;
    }

    bool operator==(const Bitmap&) const = default;
};

// Binary mask as uncompressed run lengths over a column-major scan of the
// canvas; the first run counts zeros. sum(counts) == width * height.
struct InstanceMask {
    ImageSize size;
    std::vector<std::int64_t> counts;

    bool operator==(const InstanceMask&) const = default;
};

// Throws std::invalid_argument when counts are negative, do not sum to the
// canvas area, or contain adjacent zero-length runs.
void validate_mask(const InstanceMask& m);

InstanceMask empty_mask(ImageSize size);

InstanceMask rle_encode(const Bitmap& bitmap);
Bitmap rle_decode(const InstanceMask& mask);

std::int64_t mask_area(const InstanceMask& m);
std::int64_t mask_intersection(const InstanceMask& a, const InstanceMask& b);

// IoU over run lengths. Two empty masks compare equal, hence 1.0.
// Throws std::invalid_argument on canvas mismatch.
double mask_iou(const InstanceMask& a, const InstanceMask& b);

// Intersection over the area of `a` (crowd-region matching).
double mask_iof(const InstanceMask& a, const InstanceMask& b);

InstanceMask hflip_mask(const InstanceMask& m);

// Nearest-neighbour resample onto a new canvas. Same-size input is copied.
InstanceMask rescale_mask(const InstanceMask& m, const ImageSize& target);

bool mask_less(const InstanceMask& a, const InstanceMask& b);

}  // namespace detkit
