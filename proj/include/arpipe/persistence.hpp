#pragma once

// Cross-slice consistency check: a detection must persist on at least one
// adjacent slice. Before filtering, a relaxed re-growing pass hunts for
// missed continuations next to unmatched detections; afterwards, matched
// regions are linked into tracks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "arpipe/detect.hpp"
#include "arpipe/errors.hpp"
#include "arpipe/parallel.hpp"
#include "arpipe/volume.hpp"

namespace arpipe {

struct PersistParams {
    // Generous default: with 30 nm section steps an AR can drift several
    // pixels between slices.
    double d_max = 15.0;
    bool require_overlap = false;  // matched masks must touch after 1 px dilation

    void validate() const {
        if (!(d_max > 0.0)) throw ValidationError("persistence d_max must be > 0");
    }
};

struct AdjacencyMatch {
    int z_a = 0;
    int index_a = 0;  // region index within slice z_a
    int z_b = 0;
    int index_b = 0;
    double centroid_distance = 0.0;
};

namespace detail {

inline RleMask dilate_1px(const RleMask& mask, int width, int height) {
    std::vector<std::pair<int, int>> pixels;
    mask.for_each_pixel([&](int x, int y) {
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                int xx = x + dx, yy = y + dy;
                if (xx >= 0 && xx < width && yy >= 0 && yy < height)
                    pixels.emplace_back(xx, yy);
            }
    });
    std::sort(pixels.begin(), pixels.end(),
              [](const auto& a, const auto& b) {
                  return a.second != b.second ? a.second < b.second : a.first < b.first;
              });
    pixels.erase(std::unique(pixels.begin(), pixels.end()), pixels.end());
    std::vector<std::pair<int, int>> xy(pixels.begin(), pixels.end());
    return RleMask::from_pixels(std::move(xy));
}

inline bool regions_match(const Region& a, const Region& b, const PersistParams& params,
                          int width, int height, double* distance_out = nullptr) {
    auto [ax, ay] = a.mask.centroid();
    auto [bx, by] = b.mask.centroid();
    double dist = std::hypot(ax - bx, ay - by);
    if (distance_out) *distance_out = dist;
    if (dist > params.d_max) return false;
    if (params.require_overlap) {
        RleMask da = dilate_1px(a.mask, width, height);
        RleMask db = dilate_1px(b.mask, width, height);
        if (!da.intersects(db)) return false;
    }
    return true;
}

}  // namespace detail

// All (region@z, region@z') pairs with z' in {z-1, z+1} satisfying the match
// criterion, ordered by (z', then both centroids).
inline std::vector<AdjacencyMatch> adjacency_matches(const AnnotationSet& set, int z,
                                                     const PersistParams& params) {
    if (z < 0 || z >= set.depth())
        throw ValidationError("adjacency_matches: slice index out of range");
    std::vector<AdjacencyMatch> out;
    for (int dz : {-1, +1}) {
        int zn = z + dz;
        if (zn < 0 || zn >= set.depth()) continue;
        for (std::size_t ia = 0; ia < set.by_z[z].size(); ++ia) {
            for (std::size_t ib = 0; ib < set.by_z[zn].size(); ++ib) {
                double dist = 0.0;
                if (detail::regions_match(set.by_z[z][ia], set.by_z[zn][ib], params, set.width,
                                          set.height, &dist))
                    out.push_back({z, static_cast<int>(ia), zn, static_cast<int>(ib), dist});
            }
        }
    }
    std::sort(out.begin(), out.end(), [&](const AdjacencyMatch& a, const AdjacencyMatch& b) {
        if (a.z_b != b.z_b) return a.z_b < b.z_b;
        auto ca = set.by_z[a.z_a][a.index_a].mask.centroid();
        auto cb = set.by_z[b.z_a][b.index_a].mask.centroid();
        if (ca.second != cb.second) return ca.second < cb.second;
        if (ca.first != cb.first) return ca.first < cb.first;
        auto na = set.by_z[a.z_b][a.index_b].mask.centroid();
        auto nb = set.by_z[b.z_b][b.index_b].mask.centroid();
        if (na.second != nb.second) return na.second < nb.second;
        if (na.first != nb.first) return na.first < nb.first;
        return std::pair{a.index_a, a.index_b} < std::pair{b.index_a, b.index_b};
    });
    return out;
}

struct PersistSliceInfo {
    int z = 0;
    int kept = 0;
    int removed = 0;
    int recovered = 0;
};

struct PersistReport {
    int input_regions = 0;
    int kept = 0;
    int removed = 0;
    int recovered = 0;
    int tracks = 0;
    std::vector<PersistSliceInfo> slices;
};

namespace detail {

struct RecoveryJob {
    int target_z = 0;       // slice to re-grow on
    int source_z = 0;       // slice of the unmatched region
    int source_index = 0;
    double cx = 0.0, cy = 0.0;  // source centroid
};

// Darkest pixel of the (2*half+1)^2 window around the centroid, ties broken
// lexicographically by (y, x).
inline Pixel darkest_in_window(const Slice& slice, double cx, double cy, int half) {
    int px = std::clamp(static_cast<int>(std::floor(cx)), 0, slice.width - 1);
    int py = std::clamp(static_cast<int>(std::floor(cy)), 0, slice.height - 1);
    int x0 = std::max(0, px - half), x1 = std::min(slice.width - 1, px + half);
    int y0 = std::max(0, py - half), y1 = std::min(slice.height - 1, py + half);
    Pixel best{x0, y0};
    double best_value = slice.at(x0, y0);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if (slice.at(x, y) < best_value) {
                best_value = slice.at(x, y);
                best = {x, y};
            }
    return best;
}

}  // namespace detail

// The full persistence pass.
//   Phase 1 (recovery, optional): every region without a match toward an
//     existing neighbor slice triggers a relaxed re-grow there, seeded from
//     the darkest pixel of a window around its centroid; accepted regions
//     join the set with origin=recovered unless they duplicate or touch an
//     existing region.
//   Phase 2 (filter): keep exactly the regions with at least one adjacency
//     match in the post-recovery set. Matching is symmetric, so every kept
//     region keeps its witness.
//   Phase 3 (tracks): connected components of the match graph become tracks.
inline std::pair<AnnotationSet, PersistReport> persistence_filter(
    const AnnotationSet& input, const Stack& stack_bilateral, const DetectParams& detect_params,
    const PersistParams& params, int workers = 0, bool enable_recovery = true) {
    params.validate();
    detect_params.validate();
    input.validate();
    if (input.width != stack_bilateral.width() || input.height != stack_bilateral.height() ||
        input.depth() != stack_bilateral.depth())
        throw ValidationError("persistence_filter: annotation set does not match stack");

    const int depth = input.depth();
    // Working set: the input regions plus any regions recovered by this run,
    // the latter flagged so the report can tell them apart.
    struct Entry {
        Region region;
        bool is_new = false;
    };
    std::vector<std::vector<Entry>> work(depth);
    for (int z = 0; z < depth; ++z)
        for (const Region& r : input.by_z[z]) work[z].push_back({r, false});

    auto has_match_toward = [&](const Region& r, int zn) {
        for (const Entry& other : work[zn])
            if (detail::regions_match(r, other.region, params, input.width, input.height))
                return true;
        return false;
    };

    PersistReport report;
    report.input_regions = static_cast<int>(input.region_count());
    report.slices.resize(depth);
    for (int z = 0; z < depth; ++z) report.slices[z].z = z;

    if (enable_recovery) {
        std::vector<detail::RecoveryJob> jobs;
        for (int z = 0; z < depth; ++z) {
            for (std::size_t i = 0; i < work[z].size(); ++i) {
                const Region& r = work[z][i].region;
                auto [cx, cy] = r.mask.centroid();
                for (int dz : {-1, +1}) {
                    int zn = z + dz;
                    if (zn < 0 || zn >= depth) continue;
                    if (!has_match_toward(r, zn))
                        jobs.push_back({zn, z, static_cast<int>(i), cx, cy});
                }
            }
        }
        // Candidates are merged in (target slice, source centroid) order so
        // the result is independent of worker scheduling.
        std::sort(jobs.begin(), jobs.end(),
                  [](const detail::RecoveryJob& a, const detail::RecoveryJob& b) {
                      if (a.target_z != b.target_z) return a.target_z < b.target_z;
                      if (a.cy != b.cy) return a.cy < b.cy;
                      if (a.cx != b.cx) return a.cx < b.cx;
                      if (a.source_z != b.source_z) return a.source_z < b.source_z;
                      return a.source_index < b.source_index;
                  });
        const int window_half = static_cast<int>(std::lround(params.d_max));
        std::vector<std::optional<Region>> candidates(jobs.size());
        parallel_for(jobs.size(), workers, [&](std::size_t ji) {
            const detail::RecoveryJob& job = jobs[ji];
            const Slice& slice = stack_bilateral.slices[job.target_z];
            Pixel seed = detail::darkest_in_window(slice, job.cx, job.cy, window_half);
            GrowOutcome grown =
                grow_region(slice, seed, detect_params, GrowMode::relaxed);
            if (!grown.region) return;
            AcceptDecision decision =
                accept_region(*grown.region, slice, detect_params, GrowMode::relaxed);
            if (!decision.accepted) return;
            grown.region->origin = RegionOrigin::recovered;
            candidates[ji] = std::move(grown.region);
        });
        for (std::size_t ji = 0; ji < jobs.size(); ++ji) {
            if (!candidates[ji]) continue;
            Region& cand = *candidates[ji];
            bool drop = false;
            for (const Entry& existing : work[cand.z]) {
                if (regions_duplicate(cand, existing.region, detect_params) ||
                    cand.mask.intersects(existing.region.mask)) {
                    drop = true;
                    break;
                }
            }
            if (!drop) work[cand.z].push_back({std::move(cand), true});
        }
        for (auto& slice_entries : work) {
            std::sort(slice_entries.begin(), slice_entries.end(),
                      [](const Entry& a, const Entry& b) {
                          const PixelRun& ra = a.region.mask.runs().front();
                          const PixelRun& rb = b.region.mask.runs().front();
                          return ra.y != rb.y ? ra.y < rb.y : ra.x0 < rb.x0;
                      });
        }
    }

    // Phase 2: one simultaneous pass over the post-recovery set.
    std::vector<std::vector<std::uint8_t>> matched(depth);
    for (int z = 0; z < depth; ++z) matched[z].assign(work[z].size(), 0);
    std::vector<AdjacencyMatch> all_matches;
    for (int z = 0; z + 1 < depth; ++z) {
        for (std::size_t ia = 0; ia < work[z].size(); ++ia) {
            for (std::size_t ib = 0; ib < work[z + 1].size(); ++ib) {
                double dist = 0.0;
                if (detail::regions_match(work[z][ia].region, work[z + 1][ib].region, params,
                                          input.width, input.height, &dist)) {
                    matched[z][ia] = 1;
                    matched[z + 1][ib] = 1;
                    all_matches.push_back(
                        {z, static_cast<int>(ia), z + 1, static_cast<int>(ib), dist});
                }
            }
        }
    }

    AnnotationSet output(input.width, input.height, depth);
    std::vector<std::vector<int>> kept_index(depth);  // old index -> new index or -1
    for (int z = 0; z < depth; ++z) {
        kept_index[z].assign(work[z].size(), -1);
        for (std::size_t i = 0; i < work[z].size(); ++i) {
            const Entry& e = work[z][i];
            if (matched[z][i]) {
                kept_index[z][i] = static_cast<int>(output.by_z[z].size());
                output.by_z[z].push_back(e.region);
                if (e.is_new)
                    ++report.slices[z].recovered;
                else
                    ++report.slices[z].kept;
            } else if (!e.is_new) {
                ++report.slices[z].removed;
            }
        }
    }

    // Phase 3: union-find over matches restricted to kept regions.
    std::vector<int> offsets(depth + 1, 0);
    for (int z = 0; z < depth; ++z)
        offsets[z + 1] = offsets[z] + static_cast<int>(output.by_z[z].size());
    std::vector<int> parent(offsets[depth]);
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
    auto find = [&](int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    for (const AdjacencyMatch& m : all_matches) {
        int a = kept_index[m.z_a][m.index_a];
        int b = kept_index[m.z_b][m.index_b];
        if (a < 0 || b < 0) continue;
        int ra = find(offsets[m.z_a] + a);
        int rb = find(offsets[m.z_b] + b);
        if (ra != rb) parent[rb] = ra;
    }
    int next_track = 1;
    std::vector<int> track_of_root(parent.size(), 0);
    for (int z = 0; z < depth; ++z) {
        for (std::size_t i = 0; i < output.by_z[z].size(); ++i) {
            int root = find(offsets[z] + static_cast<int>(i));
            if (track_of_root[root] == 0) track_of_root[root] = next_track++;
            output.by_z[z][i].track_id = track_of_root[root];
        }
    }
    output.next_track_id = next_track;

    for (const PersistSliceInfo& s : report.slices) {
        report.kept += s.kept;
        report.removed += s.removed;
        report.recovered += s.recovered;
    }
    report.tracks = next_track - 1;
    return {std::move(output), report};
}

}  // namespace arpipe
