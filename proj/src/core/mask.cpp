#include "detkit/core/mask.hpp"

#include <algorithm>
#include <stdexcept>

namespace detkit {

namespace {

std::int64_t canvas_area(const ImageSize& s) {
    return std::int64_t(s.width) * std::int64_t(s.height);
}

}  // namespace

void validate_mask(const InstanceMask& m) {
    if (!is_valid_size(m.size)) {
        throw std::invalid_argument("mask canvas must be at least 1x1");
    }
    std::int64_t total = 0;
    for (std::size_t i = 0; i < m.counts.size(); ++i) {
        const std::int64_t c = m.counts[i];
        if (c < 0) throw std::invalid_argument("mask run length is negative");
        if (c == 0 && i > 0 && m.counts[i - 1] == 0) {
            throw std::invalid_argument("mask has adjacent zero-length runs");
        }
        total += c;
    }
    if (total != canvas_area(m.size)) {
        throw std::invalid_argument("mask run lengths do not cover the canvas");
    }
}

InstanceMask empty_mask(ImageSize size) {
    return InstanceMask{size, {canvas_area(size)}};
}

InstanceMask rle_encode(const Bitmap& bitmap) {
    InstanceMask out;
    out.size = bitmap.size;
    std::int64_t run = 0;
    std::uint8_t bit = 0;  // runs alternate starting with zeros
    for (int x = 0; x < bitmap.size.width; ++x) {
        for (int y = 0; y < bitmap.size.height; ++y) {
            const std::uint8_t v = bitmap.at(x, y) ? 1 : 0;
            if (v == bit) {
                ++run;
            } else {
                out.counts.push_back(run);
                bit = v;
                run = 1;
            }
        }
    }
    out.counts.push_back(run);
    return out;
}

Bitmap rle_decode(const InstanceMask& mask) {
    validate_mask(mask);
    Bitmap out(mask.size);
    const int h = mask.size.height;
    std::int64_t pos = 0;
    std::uint8_t bit = 0;
    for (const std::int64_t c : mask.counts) {
        if (bit) {
            for (std::int64_t i = pos; i < pos + c; ++i) {
                const int x = int(i / h);
                const int y = int(i % h);
                out.set(x, y, true);
            }
        }
        pos += c;
        bit ^= 1;
    }
    return out;
}

std::int64_t mask_area(const InstanceMask& m) {
    std::int64_t ones = 0;
    for (std::size_t i = 1; i < m.counts.size(); i += 2) ones += m.counts[i];
    return ones;
}

std::int64_t mask_intersection(const InstanceMask& a, const InstanceMask& b) {
    // Sweep both run sequences in lockstep over the flattened canvas.
    std::size_t ia = 0, ib = 0;
    std::int64_t rema = ia < a.counts.size() ? a.counts[ia] : 0;
    std::int64_t remb = ib < b.counts.size() ? b.counts[ib] : 0;
    std::int64_t inter = 0;
    while (ia < a.counts.size() && ib < b.counts.size()) {
        const std::int64_t step = std::min(rema, remb);
        if ((ia & 1) && (ib & 1)) inter += step;
        rema -= step;
        remb -= step;
        if (rema == 0 && ++ia < a.counts.size()) rema = a.counts[ia];
        if (remb == 0 && ++ib < b.counts.size()) remb = b.counts[ib];
    }
    return inter;
}

double mask_iou(const InstanceMask& a, const InstanceMask& b) {
    if (!(a.size == b.size)) {
        throw std::invalid_argument("mask IoU requires a shared canvas");
    }
    const std::int64_t ones_a = mask_area(a);
    const std::int64_t ones_b = mask_area(b);
    if (ones_a == 0 && ones_b == 0) return 1.0;
    const std::int64_t inter = mask_intersection(a, b);
    const std::int64_t uni = ones_a + ones_b - inter;
    return double(inter) / double(uni);
}

double mask_iof(const InstanceMask& a, const InstanceMask& b) {
    if (!(a.size == b.size)) {
        throw std::invalid_argument("mask IoF requires a shared canvas");
    }
    const std::int64_t ones_a = mask_area(a);
    if (ones_a == 0) return 0.0;
    return double(mask_intersection(a, b)) / double(ones_a);
}

InstanceMask hflip_mask(const InstanceMask& m) {
    const Bitmap src = rle_decode(m);
    Bitmap dst(src.size);
    const int w = src.size.width;
    for (int y = 0; y < src.size.height; ++y) {
        for (int x = 0; x < w; ++x) {
            if (src.at(x, y)) dst.set(w - 1 - x, y, true);
        }
    }
    return rle_encode(dst);
}

InstanceMask rescale_mask(const InstanceMask& m, const ImageSize& target) {
    if (m.size == target) {
        InstanceMask copy = m;
        return copy;
    }
    const Bitmap src = rle_decode(m);
    Bitmap dst(target);
    const double sx = double(m.size.width) / double(target.width);
    const double sy = double(m.size.height) / double(target.height);
    for (int y = 0; y < target.height; ++y) {
        const int src_y = std::clamp(int((double(y) + 0.5) * sy), 0, m.size.height - 1);
        for (int x = 0; x < target.width; ++x) {
            const int src_x = std::clamp(int((double(x) + 0.5) * sx), 0, m.size.width - 1);
            if (src.at(src_x, src_y)) dst.set(x, y, true);
        }
    }
    return rle_encode(dst);
}

bool mask_less(const InstanceMask& a, const InstanceMask& b) {
    if (a.size.width != b.size.width) return a.size.width < b.size.width;
    if (a.size.height != b.size.height) return a.size.height < b.size.height;
    return std::lexicographical_compare(a.counts.begin(), a.counts.end(),
                                        b.counts.begin(), b.counts.end());
}

}  // namespace detkit
