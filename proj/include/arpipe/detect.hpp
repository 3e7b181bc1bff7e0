#pragma once

// Seeded region growing with biological priors. Seeds are dark local minima;
// growth is breadth-first over 8-connected neighbors against a seed-anchored
// intensity ceiling, so membership never depends on traversal order. Grown
// regions are screened by size, shape, and color priors, and the detections
// from the two filter variants are merged with the bilateral variant
// preferred.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "arpipe/errors.hpp"
#include "arpipe/parallel.hpp"
#include "arpipe/volume.hpp"

namespace arpipe {

struct DetectParams {
    double t_seed = 0.25;         // maximum seed intensity
    int r_min = 2;                // local-minimum window radius
    double t_grow = 0.08;         // growth tolerance above seed intensity
    double t_grow_relaxed = 0.12; // tolerance for persistence re-growing
    int a_cap = 2000;             // hard growth abort area
    int a_min = 20;               // acceptance area bounds
    int a_max = 900;
    double c_min = 0.5;           // circularity floor
    double c_min_relaxed = 0.35;
    double aspect_max = 2.5;
    double contrast_min = 0.05;   // required ring - mean intensity gap
    int ring_width = 3;           // background ring thickness
    double merge_dist = 5.0;      // centroid-distance dedupe threshold
    double merge_overlap = 0.5;   // fractional-overlap dedupe threshold

    void validate() const {
        if (!(t_seed > 0.0 && t_seed < 1.0)) throw ValidationError("t_seed must be in (0,1)");
        if (r_min < 1) throw ValidationError("r_min must be >= 1");
        if (!(t_grow > 0.0)) throw ValidationError("t_grow must be > 0");
        if (!(t_grow < t_grow_relaxed))
            throw ValidationError("t_grow must be smaller than t_grow_relaxed");
        if (!(a_min >= 1 && a_min < a_max && a_max <= a_cap))
            throw ValidationError("area thresholds must satisfy 1 <= a_min < a_max <= a_cap");
        if (!(c_min_relaxed > 0.0 && c_min_relaxed <= c_min && c_min <= 1.0))
            throw ValidationError("circularity floors must satisfy 0 < c_min_relaxed <= c_min <= 1");
        if (!(aspect_max >= 1.0)) throw ValidationError("aspect_max must be >= 1");
        if (ring_width < 1) throw ValidationError("ring_width must be >= 1");
        if (!(merge_dist > 0.0)) throw ValidationError("merge_dist must be > 0");
        if (!(merge_overlap > 0.0 && merge_overlap <= 1.0))
            throw ValidationError("merge_overlap must be in (0,1]");
    }
};

enum class GrowMode { strict, relaxed };

struct Pixel {
    int x = 0;
    int y = 0;

    friend bool operator==(const Pixel&, const Pixel&) = default;
};

// Candidate AR centers: pixels at or below t_seed that are the minimum of
// their (2*r_min+1)^2 window under the total order (intensity, y, x), so a
// flat plateau yields only its lexicographically smallest pixel per window.
inline std::vector<Pixel> find_seeds(const Slice& slice, const DetectParams& params) {
    std::vector<Pixel> seeds;
    const int w = slice.width, h = slice.height, r = params.r_min;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = slice.at(x, y);
            if (v > params.t_seed) continue;
            bool is_min = true;
            for (int dy = -r; dy <= r && is_min; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                for (int dx = -r; dx <= r; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= w || (dx == 0 && dy == 0)) continue;
                    const double q = slice.at(xx, yy);
                    if (q < v || (q == v && (yy < y || (yy == y && xx < x)))) {
                        is_min = false;
                        break;
                    }
                }
            }
            if (is_min) seeds.push_back({x, y});
        }
    }
    return seeds;
}

struct GrowOutcome {
    std::optional<Region> region;  // empty on oversize rejection
    bool oversize = false;
};

// Breadth-first growth from the seed: pixel q joins iff
// I(q) <= I(seed) + tolerance, where the tolerance depends on the mode.
// Pixels marked in `blocked` are never joined. Aborts as oversize the moment
// the grown area exceeds a_cap.
inline GrowOutcome grow_region(const Slice& slice, Pixel seed, const DetectParams& params,
                               GrowMode mode,
                               const std::vector<std::uint8_t>* blocked = nullptr) {
    const int w = slice.width, h = slice.height;
    if (!slice.in_bounds(seed.x, seed.y))
        throw ValidationError("grow_region: seed out of bounds");
    const double ceiling =
        slice.at(seed.x, seed.y) +
        (mode == GrowMode::strict ? params.t_grow : params.t_grow_relaxed);

    // Neighbor offsets as (dy, dx) in (y, x) order fix the FIFO tie-break.
    static constexpr int kOffsets[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                           {0, 1},   {1, -1}, {1, 0},  {1, 1}};
    std::vector<std::uint8_t> visited(static_cast<std::size_t>(w) * h, 0);
    std::deque<Pixel> frontier;
    std::vector<std::pair<int, int>> pixels;

    auto try_join = [&](int x, int y) {
        if (x < 0 || x >= w || y < 0 || y >= h) return false;
        std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (visited[i]) return false;
        visited[i] = 1;
        if (blocked && (*blocked)[i]) return false;
        if (slice.at(x, y) > ceiling) return false;
        frontier.push_back({x, y});
        pixels.emplace_back(x, y);
        return true;
    };

    if (!try_join(seed.x, seed.y)) return {std::nullopt, false};
    while (!frontier.empty()) {
        if (static_cast<int>(pixels.size()) > params.a_cap) return {std::nullopt, true};
        Pixel p = frontier.front();
        frontier.pop_front();
        for (const auto& off : kOffsets) try_join(p.x + off[1], p.y + off[0]);
    }
    if (static_cast<int>(pixels.size()) > params.a_cap) return {std::nullopt, true};

    Region region;
    region.z = slice.z;
    region.mask = RleMask::from_pixels(std::move(pixels));
    return {std::move(region), false};
}

enum class RejectReason { none, size, shape_circularity, shape_aspect, color_contrast };

inline const char* to_string(RejectReason r) {
    switch (r) {
        case RejectReason::none: return "none";
        case RejectReason::size: return "size";
        case RejectReason::shape_circularity: return "shape-circularity";
        case RejectReason::shape_aspect: return "shape-aspect";
        case RejectReason::color_contrast: return "color-contrast";
    }
    return "unknown";
}

struct AcceptDecision {
    bool accepted = false;
    RejectReason reason = RejectReason::none;
    RegionStats stats;
};

// Prior screening in a fixed order: size, circularity, aspect, contrast.
// The first failed criterion is reported.
inline AcceptDecision accept_region(const Region& region, const Slice& slice,
                                    const DetectParams& params, GrowMode mode) {
    AcceptDecision d;
    d.stats = region_stats(region, slice, params.ring_width);
    const double c_floor = mode == GrowMode::strict ? params.c_min : params.c_min_relaxed;
    if (d.stats.area_px < params.a_min || d.stats.area_px > params.a_max) {
        d.reason = RejectReason::size;
    } else if (d.stats.circularity < c_floor) {
        d.reason = RejectReason::shape_circularity;
    } else if (d.stats.aspect > params.aspect_max) {
        d.reason = RejectReason::shape_aspect;
    } else if (d.stats.ring_intensity - d.stats.mean_intensity < params.contrast_min) {
        d.reason = RejectReason::color_contrast;
    } else {
        d.accepted = true;
    }
    return d;
}

struct VariantCounts {
    int seeds = 0;
    int suppressed = 0;
    int grown = 0;
    int accepted = 0;
    int oversize = 0;
    int rejected_size = 0;
    int rejected_circularity = 0;
    int rejected_aspect = 0;
    int rejected_contrast = 0;
};

struct SliceDetectLog {
    int z = 0;
    VariantCounts bilateral;
    VariantCounts sharpened;
    int merged_duplicates = 0;
    int regions = 0;
};

struct DetectLog {
    std::vector<SliceDetectLog> slices;
    int total_regions = 0;
};

// Duplicate rule shared by the variant merge and persistence recovery:
// near centroids or a dominant pixel overlap.
inline bool regions_duplicate(const Region& a, const Region& b, const DetectParams& params) {
    auto [ax, ay] = a.mask.centroid();
    auto [bx, by] = b.mask.centroid();
    const double dist = std::hypot(ax - bx, ay - by);
    if (dist <= params.merge_dist) return true;
    const int inter = RleMask::intersection_area(a.mask, b.mask);
    return inter >= params.merge_overlap * static_cast<double>(
                        std::min(a.mask.area(), b.mask.area()));
}

namespace detail {

// One filter variant on one slice: seeds -> grow -> accept. Pixels of
// accepted regions suppress later seeds and act as growth barriers, so the
// variant's detections are pairwise disjoint. Acceptance statistics are
// always taken from the bilateral intensities.
inline std::vector<Region> detect_variant(const Slice& variant_slice,
                                          const Slice& stats_slice, const DetectParams& params,
                                          VariantCounts& counts) {
    std::vector<Region> accepted;
    std::vector<std::uint8_t> claimed(
        static_cast<std::size_t>(variant_slice.width) * variant_slice.height, 0);
    std::vector<Pixel> seeds = find_seeds(variant_slice, params);
    counts.seeds = static_cast<int>(seeds.size());
    for (const Pixel& seed : seeds) {
        if (claimed[variant_slice.idx(seed.x, seed.y)]) {
            ++counts.suppressed;
            continue;
        }
        GrowOutcome grown = grow_region(variant_slice, seed, params, GrowMode::strict, &claimed);
        if (grown.oversize) {
            ++counts.oversize;
            continue;
        }
        if (!grown.region) continue;  // seed sat on a blocked pixel
        ++counts.grown;
        AcceptDecision decision =
            accept_region(*grown.region, stats_slice, params, GrowMode::strict);
        if (!decision.accepted) {
            switch (decision.reason) {
                case RejectReason::size: ++counts.rejected_size; break;
                case RejectReason::shape_circularity: ++counts.rejected_circularity; break;
                case RejectReason::shape_aspect: ++counts.rejected_aspect; break;
                case RejectReason::color_contrast: ++counts.rejected_contrast; break;
                case RejectReason::none: break;
            }
            continue;
        }
        ++counts.accepted;
        grown.region->mask.for_each_pixel([&](int x, int y) {
            claimed[variant_slice.idx(x, y)] = 1;
        });
        accepted.push_back(std::move(*grown.region));
    }
    return accepted;
}

}  // namespace detail

// Runs the detector on both filtered variants of every slice and merges the
// results. Duplicates keep the bilateral-variant region; a sharpened-variant
// region that touches any kept region is dropped as well, so the output
// regions on one slice never share pixels.
inline AnnotationSet detect_stack(const Stack& stack_bilateral, const Stack& stack_sharpened,
                                  const DetectParams& params, int workers = 0,
                                  DetectLog* log = nullptr) {
    params.validate();
    if (stack_bilateral.width() != stack_sharpened.width() ||
        stack_bilateral.height() != stack_sharpened.height() ||
        stack_bilateral.depth() != stack_sharpened.depth())
        throw ValidationError("detect_stack: filter variants have mismatched dimensions");

    const int depth = stack_bilateral.depth();
    AnnotationSet set(stack_bilateral.width(), stack_bilateral.height(), depth);
    std::vector<SliceDetectLog> slice_logs(depth);

    parallel_for(static_cast<std::size_t>(depth), workers, [&](std::size_t z) {
        SliceDetectLog& slog = slice_logs[z];
        slog.z = static_cast<int>(z);
        const Slice& bil = stack_bilateral.slices[z];
        const Slice& shp = stack_sharpened.slices[z];
        std::vector<Region> from_bilateral =
            detail::detect_variant(bil, bil, params, slog.bilateral);
        std::vector<Region> from_sharpened =
            detail::detect_variant(shp, bil, params, slog.sharpened);

        std::vector<Region> merged = std::move(from_bilateral);
        for (Region& cand : from_sharpened) {
            bool drop = false;
            for (const Region& kept : merged) {
                if (regions_duplicate(cand, kept, params) || cand.mask.intersects(kept.mask)) {
                    drop = true;
                    break;
                }
            }
            if (drop)
                ++slog.merged_duplicates;
            else
                merged.push_back(std::move(cand));
        }
        slog.regions = static_cast<int>(merged.size());
        set.by_z[z] = std::move(merged);
    });

    set.sort_slices();
    if (log) {
        log->slices = std::move(slice_logs);
        log->total_regions = static_cast<int>(set.region_count());
    }
    return set;
}

}  // namespace arpipe
