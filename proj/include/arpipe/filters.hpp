#pragma once

// Edge-preserving denoising (bilateral filter) and edge accentuation
// (Laplacian sharpening via the neighborhood-mean difference).

#include <algorithm>
#include <cmath>
#include <vector>

#include "arpipe/errors.hpp"
#include "arpipe/parallel.hpp"
#include "arpipe/volume.hpp"

namespace arpipe {

struct BilateralParams {
    double sigma_s = 3.0;  // spatial std-dev, pixels
    double sigma_r = 0.1;  // range std-dev, normalized intensity units
    int radius = 0;        // 0 = auto: ceil(3*sigma_s)

    int effective_radius() const {
        return radius > 0 ? radius : static_cast<int>(std::ceil(3.0 * sigma_s));
    }

    void validate() const {
        if (!(sigma_s > 0.0)) throw ValidationError("bilateral sigma_s must be > 0");
        if (!(sigma_r > 0.0)) throw ValidationError("bilateral sigma_r must be > 0");
        if (radius < 0) throw ValidationError("bilateral radius must be >= 1 (or 0 = auto)");
    }
};

struct SharpenParams {
    enum class Neighborhood { four, eight };

    double lambda = 1.0;
    Neighborhood neighborhood = Neighborhood::eight;

    void validate() const {
        if (!(lambda >= 0.0)) throw ValidationError("sharpen lambda must be >= 0");
    }
};

// O(p) = sum_q w(p,q) I(q) / sum_q w(p,q) over a square window, with
// w = exp(-|p-q|^2 / 2*sigma_s^2) * exp(-(I(p)-I(q))^2 / 2*sigma_r^2).
// Out-of-bounds taps replicate-clamp their coordinates; the spatial weight
// keeps the unclamped offset. Accumulating differences against the center
// value makes constant inputs reproduce exactly.
inline Slice bilateral(const Slice& slice, const BilateralParams& params) {
    params.validate();
    const int w = slice.width, h = slice.height;
    const int radius = params.effective_radius();
    const double inv_2ss = 1.0 / (2.0 * params.sigma_s * params.sigma_s);
    const double inv_2sr = 1.0 / (2.0 * params.sigma_r * params.sigma_r);

    const int diameter = 2 * radius + 1;
    std::vector<double> spatial(static_cast<std::size_t>(diameter) * diameter);
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            spatial[static_cast<std::size_t>(dy + radius) * diameter + (dx + radius)] =
                std::exp(-(static_cast<double>(dx) * dx + static_cast<double>(dy) * dy) * inv_2ss);

    Slice out = slice;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double center = slice.at(x, y);
            double num = 0.0, den = 0.0;
            for (int dy = -radius; dy <= radius; ++dy) {
                const int yy = std::clamp(y + dy, 0, h - 1);
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int xx = std::clamp(x + dx, 0, w - 1);
                    const double diff = slice.at(xx, yy) - center;
                    const double weight =
                        spatial[static_cast<std::size_t>(dy + radius) * diameter +
                                (dx + radius)] *
                        std::exp(-diff * diff * inv_2sr);
                    num += weight * diff;
                    den += weight;
                }
            }
            out.at(x, y) = std::clamp(center + num / den, 0.0, 1.0);
        }
    }
    return out;
}

// O(p) = clamp(I(p) + lambda * (I(p) - m(p))) with m(p) the mean of the four-
// or eight-neighborhood, replicate border, center offset excluded.
inline Slice laplacian_sharpen(const Slice& slice, const SharpenParams& params) {
    params.validate();
    const int w = slice.width, h = slice.height;
    static constexpr int kOffsets8[8][2] = {{-1, -1}, {0, -1}, {1, -1}, {-1, 0},
                                            {1, 0},   {-1, 1}, {0, 1},  {1, 1}};
    static constexpr int kOffsets4[4][2] = {{0, -1}, {-1, 0}, {1, 0}, {0, 1}};
    const bool eight = params.neighborhood == SharpenParams::Neighborhood::eight;
    const int count = eight ? 8 : 4;

    Slice out = slice;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sum = 0.0;
            for (int k = 0; k < count; ++k) {
                const int xx = std::clamp(x + (eight ? kOffsets8[k][0] : kOffsets4[k][0]), 0, w - 1);
                const int yy = std::clamp(y + (eight ? kOffsets8[k][1] : kOffsets4[k][1]), 0, h - 1);
                sum += slice.at(xx, yy);
            }
            const double mean = sum / static_cast<double>(count);
            const double v = slice.at(x, y);
            out.at(x, y) = std::clamp(v + params.lambda * (v - mean), 0.0, 1.0);
        }
    }
    return out;
}

inline Stack bilateral_stack(const Stack& stack, const BilateralParams& params, int workers = 0) {
    Stack out = stack;
    parallel_for(static_cast<std::size_t>(stack.depth()), workers,
                 [&](std::size_t z) { out.slices[z] = bilateral(stack.slices[z], params); });
    for (int z = 0; z < out.depth(); ++z) out.slices[z].z = z;
    return out;
}

inline Stack sharpen_stack(const Stack& stack, const SharpenParams& params, int workers = 0) {
    Stack out = stack;
    parallel_for(static_cast<std::size_t>(stack.depth()), workers,
                 [&](std::size_t z) { out.slices[z] = laplacian_sharpen(stack.slices[z], params); });
    for (int z = 0; z < out.depth(); ++z) out.slices[z].z = z;
    return out;
}

}  // namespace arpipe
