#pragma once

// Data model shared by the whole pipeline: image stacks, run-length encoded
// region masks, per-region geometry, annotation sets, and label volumes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "arpipe/errors.hpp"

namespace arpipe {

// Physical voxel size in nanometres. EM stacks are strongly anisotropic:
// the default matches 3x3 nm in-plane sampling with 30 nm section steps.
struct VoxelDims {
    double dx_nm = 3.0;
    double dy_nm = 3.0;
    double dz_nm = 30.0;

    void validate() const {
        if (!(dx_nm > 0.0) || !(dy_nm > 0.0) || !(dz_nm > 0.0))
            throw ValidationError("voxel dimensions must be strictly positive");
    }
};

// One grayscale section. Intensities are row-major and normalized to [0,1].
struct Slice {
    int z = 0;
    int width = 0;
    int height = 0;
    std::vector<double> intensities;

    std::size_t idx(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
               static_cast<std::size_t>(x);
    }
    double at(int x, int y) const { return intensities[idx(x, y)]; }
    double& at(int x, int y) { return intensities[idx(x, y)]; }
    bool in_bounds(int x, int y) const {
        return x >= 0 && x < width && y >= 0 && y < height;
    }

    double mean() const {
        double sum = 0.0;
        for (double v : intensities) sum += v;
        return intensities.empty() ? 0.0 : sum / static_cast<double>(intensities.size());
    }

    void validate() const {
        if (width <= 0 || height <= 0)
            throw ValidationError("slice dimensions must be positive");
        if (intensities.size() !=
            static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
            throw ValidationError("slice buffer size does not match width*height");
        for (double v : intensities)
            if (!(v >= 0.0 && v <= 1.0))
                throw ValidationError("slice intensity outside [0,1]");
    }
};

inline Slice make_slice(int z, int width, int height, double fill = 0.0) {
    Slice s;
    s.z = z;
    s.width = width;
    s.height = height;
    s.intensities.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                         fill);
    return s;
}

// An ordered set of same-sized slices.
struct Stack {
    VoxelDims dims;
    std::vector<Slice> slices;

    int depth() const { return static_cast<int>(slices.size()); }
    int width() const { return slices.empty() ? 0 : slices.front().width; }
    int height() const { return slices.empty() ? 0 : slices.front().height; }

    // Fixed traversal order (z, then row-major) keeps this deterministic.
    double mean_intensity() const {
        double sum = 0.0;
        std::size_t count = 0;
        for (const Slice& s : slices) {
            for (double v : s.intensities) sum += v;
            count += s.intensities.size();
        }
        return count == 0 ? 0.0 : sum / static_cast<double>(count);
    }

    void validate() const {
        dims.validate();
        if (slices.empty()) throw ValidationError("stack has no slices");
        for (std::size_t i = 0; i < slices.size(); ++i) {
            const Slice& s = slices[i];
            s.validate();
            if (s.z != static_cast<int>(i))
                throw ValidationError("stack z indices are not consecutive from 0");
            if (s.width != width() || s.height != height())
                throw ValidationError("stack slices have mismatched dimensions");
        }
    }
};

// Contiguous pixels of one row: y, [x0, x1).
struct PixelRun {
    int y = 0;
    int x0 = 0;
    int x1 = 0;

    friend bool operator==(const PixelRun&, const PixelRun&) = default;
};

struct BoundingBox {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive; empty when x1 < x0

    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
};

// Run-length encoded pixel set. Runs are kept canonical: sorted by (y, x0),
// non-overlapping, and never adjacent within a row.
class RleMask {
public:
    RleMask() = default;

    static RleMask from_runs(std::vector<PixelRun> runs) {
        for (const PixelRun& r : runs)
            if (r.x0 >= r.x1) throw ValidationError("RLE run has non-positive length");
        std::sort(runs.begin(), runs.end(), [](const PixelRun& a, const PixelRun& b) {
            return a.y != b.y ? a.y < b.y : a.x0 < b.x0;
        });
        for (std::size_t i = 1; i < runs.size(); ++i) {
            if (runs[i].y == runs[i - 1].y && runs[i].x0 <= runs[i - 1].x1)
                throw ValidationError("RLE runs overlap or touch; mask is not canonical");
        }
        RleMask m;
        m.runs_ = std::move(runs);
        m.recompute();
        return m;
    }

    // Pixels need not be sorted or unique-checked beyond exact duplicates.
    static RleMask from_pixels(std::vector<std::pair<int, int>> xy) {
        std::sort(xy.begin(), xy.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second < b.second : a.first < b.first;
        });
        RleMask m;
        for (std::size_t i = 0; i < xy.size();) {
            if (i > 0 && xy[i] == xy[i - 1]) throw ValidationError("duplicate pixel in mask");
            int y = xy[i].second;
            int x0 = xy[i].first;
            int x1 = x0 + 1;
            ++i;
            while (i < xy.size() && xy[i].second == y && xy[i].first == x1) {
                ++x1;
                ++i;
            }
            m.runs_.push_back({y, x0, x1});
        }
        m.recompute();
        return m;
    }

    static RleMask from_bitmap(const std::vector<std::uint8_t>& bits, int width, int height) {
        RleMask m;
        for (int y = 0; y < height; ++y) {
            int x = 0;
            while (x < width) {
                if (!bits[static_cast<std::size_t>(y) * width + x]) {
                    ++x;
                    continue;
                }
                int x0 = x;
                while (x < width && bits[static_cast<std::size_t>(y) * width + x]) ++x;
                m.runs_.push_back({y, x0, x});
            }
        }
        m.recompute();
        return m;
    }

    const std::vector<PixelRun>& runs() const { return runs_; }
    bool empty() const { return runs_.empty(); }
    int area() const { return area_; }
    const BoundingBox& bbox() const { return bbox_; }

    bool contains(int x, int y) const {
        auto it = std::lower_bound(
            runs_.begin(), runs_.end(), std::pair<int, int>{y, x},
            [](const PixelRun& r, const std::pair<int, int>& p) {
                return r.y != p.first ? r.y < p.first : r.x1 <= p.second;
            });
        return it != runs_.end() && it->y == y && it->x0 <= x && x < it->x1;
    }

    bool within_bounds(int width, int height) const {
        for (const PixelRun& r : runs_)
            if (r.y < 0 || r.y >= height || r.x0 < 0 || r.x1 > width) return false;
        return true;
    }

    template <typename Fn>
    void for_each_pixel(Fn&& fn) const {
        for (const PixelRun& r : runs_)
            for (int x = r.x0; x < r.x1; ++x) fn(x, r.y);
    }

    // Mean of pixel centers; pixel (x, y) has center (x+0.5, y+0.5).
    std::pair<double, double> centroid() const {
        double sx = 0.0, sy = 0.0;
        for (const PixelRun& r : runs_) {
            double len = static_cast<double>(r.x1 - r.x0);
            sx += len * (static_cast<double>(r.x0 + r.x1) / 2.0);
            sy += len * (static_cast<double>(r.y) + 0.5);
        }
        double a = static_cast<double>(area_);
        return {sx / a, sy / a};
    }

    static int intersection_area(const RleMask& a, const RleMask& b) {
        int total = 0;
        std::size_t i = 0, j = 0;
        while (i < a.runs_.size() && j < b.runs_.size()) {
            const PixelRun& ra = a.runs_[i];
            const PixelRun& rb = b.runs_[j];
            if (ra.y != rb.y) {
                (ra.y < rb.y) ? ++i : ++j;
                continue;
            }
            int lo = std::max(ra.x0, rb.x0);
            int hi = std::min(ra.x1, rb.x1);
            if (hi > lo) total += hi - lo;
            (ra.x1 < rb.x1) ? ++i : ++j;
        }
        return total;
    }

    bool intersects(const RleMask& other) const {
        return intersection_area(*this, other) > 0;
    }

    // Single 8-connected component check via union-find over runs.
    bool is_single_component_8() const {
        if (runs_.empty()) return false;
        std::vector<std::size_t> parent(runs_.size());
        for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
        auto find = [&](std::size_t x) {
            while (parent[x] != x) {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            return x;
        };
        auto unite = [&](std::size_t a, std::size_t b) {
            a = find(a);
            b = find(b);
            if (a != b) parent[b] = a;
        };
        std::size_t row_start = 0;
        for (std::size_t i = 1; i < runs_.size(); ++i) {
            while (runs_[row_start].y < runs_[i].y - 1) ++row_start;
            for (std::size_t j = row_start; j < i; ++j) {
                if (runs_[j].y != runs_[i].y - 1) continue;
                // 8-connectivity joins intervals within one diagonal step.
                if (runs_[j].x0 <= runs_[i].x1 && runs_[i].x0 <= runs_[j].x1) unite(i, j);
            }
        }
        std::size_t root = find(0);
        for (std::size_t i = 1; i < runs_.size(); ++i)
            if (find(i) != root) return false;
        return true;
    }

    friend bool operator==(const RleMask& a, const RleMask& b) {
        return a.runs_ == b.runs_;
    }

private:
    void recompute() {
        area_ = 0;
        bbox_ = BoundingBox{};
        if (runs_.empty()) return;
        bbox_.x0 = std::numeric_limits<int>::max();
        bbox_.y0 = runs_.front().y;
        bbox_.x1 = std::numeric_limits<int>::min();
        bbox_.y1 = runs_.back().y;
        for (const PixelRun& r : runs_) {
            area_ += r.x1 - r.x0;
            bbox_.x0 = std::min(bbox_.x0, r.x0);
            bbox_.x1 = std::max(bbox_.x1, r.x1 - 1);
        }
    }

    std::vector<PixelRun> runs_;
    int area_ = 0;
    BoundingBox bbox_;
};

enum class RegionOrigin { detected, recovered };

inline const char* to_string(RegionOrigin o) {
    return o == RegionOrigin::detected ? "detected" : "recovered";
}

// One detected AR cross-section on one slice.
struct Region {
    int z = 0;
    RleMask mask;
    std::optional<int> track_id;  // links cross-sections of one AR across slices
    RegionOrigin origin = RegionOrigin::detected;

    friend bool operator==(const Region&, const Region&) = default;
};

// Shape / size / color statistics backing the detector's biological priors.
struct RegionStats {
    int area_px = 0;
    double centroid_x = 0.0, centroid_y = 0.0;
    BoundingBox bbox;
    int perimeter_units = 0;  // unit pixel edges on the boundary
    double circularity = 0.0;  // 4*pi*area / perimeter^2, clamped at 1
    double aspect = 1.0;       // max(bbox_w, bbox_h) / min(bbox_w, bbox_h)
    double mean_intensity = 0.0;
    double ring_intensity = 0.0;  // mean over the background ring around the mask
};

// Pixels outside the mask within Chebyshev distance `ring_width` of it,
// clipped to the slice. Returned as a bitmap over the expanded bbox frame.
inline RleMask background_ring(const RleMask& mask, int width, int height, int ring_width) {
    const BoundingBox& bb = mask.bbox();
    int fx0 = std::max(0, bb.x0 - ring_width);
    int fy0 = std::max(0, bb.y0 - ring_width);
    int fx1 = std::min(width - 1, bb.x1 + ring_width);
    int fy1 = std::min(height - 1, bb.y1 + ring_width);
    int fw = fx1 - fx0 + 1;
    int fh = fy1 - fy0 + 1;
    std::vector<std::uint8_t> frame(static_cast<std::size_t>(fw) * fh, 0);
    mask.for_each_pixel([&](int x, int y) {
        frame[static_cast<std::size_t>(y - fy0) * fw + (x - fx0)] = 1;
    });
    // ring_width iterations of 3x3 dilation trace out the Chebyshev ball.
    std::vector<std::uint8_t> cur = frame;
    std::vector<std::uint8_t> next(cur.size());
    for (int iter = 0; iter < ring_width; ++iter) {
        for (int y = 0; y < fh; ++y) {
            for (int x = 0; x < fw; ++x) {
                std::uint8_t v = 0;
                for (int dy = -1; dy <= 1 && !v; ++dy) {
                    int yy = y + dy;
                    if (yy < 0 || yy >= fh) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        int xx = x + dx;
                        if (xx < 0 || xx >= fw) continue;
                        if (cur[static_cast<std::size_t>(yy) * fw + xx]) {
                            v = 1;
                            break;
                        }
                    }
                }
                next[static_cast<std::size_t>(y) * fw + x] = v;
            }
        }
        std::swap(cur, next);
    }
    std::vector<std::pair<int, int>> ring_pixels;
    for (int y = 0; y < fh; ++y)
        for (int x = 0; x < fw; ++x) {
            std::size_t i = static_cast<std::size_t>(y) * fw + x;
            if (cur[i] && !frame[i]) ring_pixels.emplace_back(x + fx0, y + fy0);
        }
    return RleMask::from_pixels(std::move(ring_pixels));
}

inline RegionStats region_stats(const Region& region, const Slice& slice, int ring_width = 3) {
    const RleMask& mask = region.mask;
    if (mask.empty()) throw ValidationError("region_stats: empty mask");
    if (!mask.within_bounds(slice.width, slice.height))
        throw ValidationError("region_stats: mask exceeds slice bounds");

    RegionStats st;
    st.area_px = mask.area();
    auto [cx, cy] = mask.centroid();
    st.centroid_x = cx;
    st.centroid_y = cy;
    st.bbox = mask.bbox();

    // Perimeter: unit edges between a mask pixel and a non-mask pixel or the
    // image border. Runs are maximal, so each contributes its two vertical
    // (left/right) edges; horizontal edges come from row-overlap deficits.
    const auto& runs = mask.runs();
    int perimeter = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const PixelRun& r = runs[i];
        int len = r.x1 - r.x0;
        perimeter += 2;  // left and right caps
        int covered_above = 0, covered_below = 0;
        for (std::size_t j = i; j-- > 0;) {
            if (runs[j].y < r.y - 1) break;
            if (runs[j].y != r.y - 1) continue;
            covered_above += std::max(0, std::min(r.x1, runs[j].x1) - std::max(r.x0, runs[j].x0));
        }
        for (std::size_t j = i + 1; j < runs.size(); ++j) {
            if (runs[j].y > r.y + 1) break;
            if (runs[j].y != r.y + 1) continue;
            covered_below += std::max(0, std::min(r.x1, runs[j].x1) - std::max(r.x0, runs[j].x0));
        }
        perimeter += (len - covered_above) + (len - covered_below);
    }
    st.perimeter_units = perimeter;
    constexpr double kPi = 3.14159265358979323846;
    st.circularity = std::min(
        1.0, 4.0 * kPi * static_cast<double>(st.area_px) /
                 (static_cast<double>(perimeter) * static_cast<double>(perimeter)));
    double bw = static_cast<double>(st.bbox.width());
    double bh = static_cast<double>(st.bbox.height());
    st.aspect = std::max(bw, bh) / std::min(bw, bh);

    double sum = 0.0;
    mask.for_each_pixel([&](int x, int y) { sum += slice.at(x, y); });
    st.mean_intensity = sum / static_cast<double>(st.area_px);

    RleMask ring = background_ring(mask, slice.width, slice.height, ring_width);
    if (ring.empty()) {
        st.ring_intensity = 0.0;
    } else {
        double rsum = 0.0;
        ring.for_each_pixel([&](int x, int y) { rsum += slice.at(x, y); });
        st.ring_intensity = rsum / static_cast<double>(ring.area());
    }
    return st;
}

// All regions across a stack, grouped by slice.
struct AnnotationSet {
    int width = 0;
    int height = 0;
    std::vector<std::vector<Region>> by_z;
    int next_track_id = 1;

    AnnotationSet() = default;
    AnnotationSet(int w, int h, int depth) : width(w), height(h), by_z(depth) {}

    int depth() const { return static_cast<int>(by_z.size()); }

    std::size_t region_count() const {
        std::size_t n = 0;
        for (const auto& v : by_z) n += v.size();
        return n;
    }

    template <typename Fn>
    void for_each_region(Fn&& fn) const {
        for (const auto& v : by_z)
            for (const Region& r : v) fn(r);
    }

    // Canonical per-slice ordering: by first run (y, x0).
    void sort_slices() {
        for (auto& v : by_z) {
            std::sort(v.begin(), v.end(), [](const Region& a, const Region& b) {
                const PixelRun& ra = a.mask.runs().front();
                const PixelRun& rb = b.mask.runs().front();
                return ra.y != rb.y ? ra.y < rb.y : ra.x0 < rb.x0;
            });
        }
    }

    void validate() const {
        if (width <= 0 || height <= 0)
            throw ValidationError("annotation set dimensions must be positive");
        for (int z = 0; z < depth(); ++z) {
            std::vector<std::uint8_t> occupied(
                static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
            for (const Region& r : by_z[z]) {
                if (r.z != z) throw ValidationError("region z does not match its slice group");
                if (r.mask.empty()) throw ValidationError("region has an empty mask");
                if (!r.mask.within_bounds(width, height))
                    throw ValidationError("region exceeds slice bounds");
                if (!r.mask.is_single_component_8())
                    throw ValidationError("region is not a single 8-connected component");
                if (r.track_id && *r.track_id <= 0)
                    throw ValidationError("track ids must be positive");
                bool overlap = false;
                r.mask.for_each_pixel([&](int x, int y) {
                    std::uint8_t& cell = occupied[static_cast<std::size_t>(y) * width + x];
                    if (cell) overlap = true;
                    cell = 1;
                });
                if (overlap)
                    throw ValidationError("regions overlap on slice z=" + std::to_string(z));
            }
        }
    }

    friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

// Per-slice 16-bit label maps; 0 is background.
struct LabelVolume {
    int width = 0;
    int height = 0;
    std::vector<std::vector<std::uint16_t>> slices;

    LabelVolume() = default;
    LabelVolume(int w, int h, int depth)
        : width(w),
          height(h),
          slices(depth, std::vector<std::uint16_t>(
                            static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0)) {}

    int depth() const { return static_cast<int>(slices.size()); }
    std::uint16_t at(int x, int y, int z) const {
        return slices[z][static_cast<std::size_t>(y) * width + x];
    }
    std::uint16_t& at(int x, int y, int z) {
        return slices[z][static_cast<std::size_t>(y) * width + x];
    }
};

}  // namespace arpipe
