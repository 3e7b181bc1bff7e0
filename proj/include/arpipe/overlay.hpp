#pragma once

// Burned-in inspection overlays: the input slice rendered to RGB with region
// boundaries drawn in a per-track tint and interiors lightly blended.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "arpipe/annotations_io.hpp"
#include "arpipe/volume.hpp"

namespace arpipe {

// Distinct, stable tint per label: golden-ratio hue rotation at full
// saturation.
inline std::array<std::uint8_t, 3> label_color(int label) {
    double hue = std::fmod(0.61803398875 * static_cast<double>(label), 1.0) * 6.0;
    double x = 1.0 - std::abs(std::fmod(hue, 2.0) - 1.0);
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hue)) {
        case 0: r = 1; g = x; break;
        case 1: r = x; g = 1; break;
        case 2: g = 1; b = x; break;
        case 3: g = x; b = 1; break;
        case 4: r = x; b = 1; break;
        default: r = 1; b = x; break;
    }
    auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); };
    return {q(r), q(g), q(b)};
}

inline std::vector<std::uint8_t> render_overlay(const Slice& slice,
                                                const std::vector<Region>& regions) {
    const int w = slice.width, h = slice.height;
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto v = static_cast<std::uint8_t>(std::lround(slice.at(x, y) * 255.0));
            std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
            rgb[i] = rgb[i + 1] = rgb[i + 2] = v;
        }
    std::vector<int> ids = region_label_ids(regions);
    for (std::size_t ri = 0; ri < regions.size(); ++ri) {
        const RleMask& mask = regions[ri].mask;
        auto color = label_color(ids[ri]);
        mask.for_each_pixel([&](int x, int y) {
            bool boundary = !mask.contains(x - 1, y) || !mask.contains(x + 1, y) ||
                            !mask.contains(x, y - 1) || !mask.contains(x, y + 1);
            std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
            if (boundary) {
                rgb[i] = color[0];
                rgb[i + 1] = color[1];
                rgb[i + 2] = color[2];
            } else {
                for (int c = 0; c < 3; ++c)
                    rgb[i + c] = static_cast<std::uint8_t>(
                        std::lround(0.65 * rgb[i + c] + 0.35 * color[c]));
            }
        });
    }
    return rgb;
}

}  // namespace arpipe
