#pragma once

// Deterministic synthetic EM-like stacks with exactly known AR ground truth:
// a textured background, persistent dark membranes and large blobs as
// scenery, multi-slice AR tracks with jittered centroid paths, single-slice
// distractor disks, and a few borderline AR instances drawn just above the
// strict seed threshold so only the relaxed recovery pass can catch them.
//
// Generation is a pure function of the config (one xoshiro stream, fixed
// draw order: blobs, borderline-host tracks, membranes, remaining tracks,
// distractors, noise). Entities are placed by rejection sampling under
// separation rules that keep the ground truth unambiguous:
//   - AR and distractor disks never overlap or touch each other, blobs, or
//     membranes (a touching membrane falls inside the growth tolerance of a
//     disk seed and would absorb the grown region);
//   - structures on same or adjacent slices keep their centroids farther
//     apart than any plausible cross-slice continuation;
//   - the window a recovery pass would search around a borderline instance
//     is kept free of competing dark entities, so membranes and later disks
//     are sampled to avoid those windows.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "arpipe/errors.hpp"
#include "arpipe/rng.hpp"
#include "arpipe/volume.hpp"

namespace arpipe {

struct PhantomConfig {
    int width = 256;
    int height = 256;
    int depth = 16;

    double background_mean = 0.6;
    double background_noise_sigma = 0.05;  // white-noise sigma before smoothing
    double noise_smooth_sigma = 2.0;       // px

    int membrane_count = 12;
    double membrane_intensity = 0.2;
    int membrane_width_min = 2;
    int membrane_width_max = 4;

    int blob_count = 3;  // mitochondria-like
    double blob_radius_min = 15.0;
    double blob_radius_max = 30.0;
    double blob_intensity = 0.3;

    int ar_track_count = 30;
    double ar_radius_min = 3.0;
    double ar_radius_max = 8.0;
    double ar_intensity = 0.15;
    int ar_span_min = 3;
    int ar_span_max = 10;
    double ar_jitter_max = 4.0;  // max centroid step per slice, per axis

    int distractor_count = 20;  // single-slice AR look-alikes

    int borderline_count = 4;           // strict-miss / relaxed-hit instances
    double borderline_intensity = 0.28; // just above the default seed threshold

    std::uint64_t rng_seed = 42;

    void validate() const {
        if (width <= 0 || height <= 0 || depth <= 0)
            throw ValidationError("phantom dimensions must be positive");
        if (membrane_count < 0 || blob_count < 0 || ar_track_count < 0 ||
            distractor_count < 0 || borderline_count < 0)
            throw ValidationError("phantom entity counts must be >= 0");
        if (borderline_count > ar_track_count)
            throw ValidationError("borderline_count cannot exceed ar_track_count");
        if (!(background_mean > 0.0 && background_mean < 1.0))
            throw ValidationError("background_mean must be in (0,1)");
        if (background_noise_sigma < 0.0 || noise_smooth_sigma < 0.0)
            throw ValidationError("noise parameters must be >= 0");
        if (!(membrane_width_min >= 1 && membrane_width_min <= membrane_width_max))
            throw ValidationError("membrane width range is invalid");
        if (!(blob_radius_min > 0.0 && blob_radius_min <= blob_radius_max))
            throw ValidationError("blob radius range is invalid");
        if (!(ar_radius_min > 0.0 && ar_radius_min <= ar_radius_max))
            throw ValidationError("ar radius range is invalid");
        if (!(ar_span_min >= 2 && ar_span_min <= ar_span_max))
            throw ValidationError("ar span range must satisfy 2 <= min <= max");
        if (ar_track_count > 0 && ar_span_min > depth)
            throw ValidationError("ar_span_min exceeds stack depth");
        if (borderline_count > 0 && (ar_span_max < 3 || depth < 3))
            throw ValidationError("borderline instances need tracks of span >= 3");
        if (!(ar_jitter_max >= 0.0)) throw ValidationError("ar_jitter_max must be >= 0");
        double margin = ar_radius_max + 8.0;
        if (2.0 * margin >= static_cast<double>(std::min(width, height)))
            throw ValidationError("phantom slice too small for the configured ar radius");
    }
};

struct PhantomDisk {
    int z = 0;
    double cx = 0.0, cy = 0.0, r = 0.0;
    double intensity = 0.0;
    bool borderline = false;
};

struct PhantomTrack {
    int label = 0;
    std::vector<PhantomDisk> instances;  // consecutive z
};

struct PhantomDistractor {
    int label = 0;
    PhantomDisk disk;
};

struct PhantomMembrane {
    double width = 0.0;
    std::vector<std::pair<double, double>> points;         // base polyline
    std::vector<std::pair<double, double>> slice_offsets;  // per-slice drift
};

struct PhantomBlob {
    double cx = 0.0, cy = 0.0, r = 0.0;
    std::vector<std::pair<double, double>> slice_offsets;
};

struct PhantomManifest {
    int width = 0, height = 0, depth = 0;
    std::vector<PhantomTrack> tracks;
    std::vector<PhantomDistractor> distractors;
    std::vector<PhantomMembrane> membranes;
    std::vector<PhantomBlob> blobs;
    std::vector<int> spurious_labels;  // distractor labels, excluded from eval truth
};

struct PhantomOutput {
    Stack stack;
    LabelVolume truth;
    PhantomManifest manifest;
};

namespace detail {

// Structures closer than this on same/adjacent slices would read as
// cross-slice continuations of each other, so placement keeps them apart.
inline constexpr double kAdjacentClearance = 17.0;
// Half-width of the neighborhood kept free of competing dark entities around
// a borderline instance (recovery search window plus drift allowance).
inline constexpr int kBorderlineWindowHalf = 21;

inline double point_segment_distance(double px, double py, double ax, double ay, double bx,
                                     double by) {
    double vx = bx - ax, vy = by - ay;
    double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
    return std::hypot(dx, dy);
}

inline double point_polyline_distance(double px, double py,
                                      const std::vector<std::pair<double, double>>& pts,
                                      double ox, double oy) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        best = std::min(best, point_segment_distance(px, py, pts[i].first + ox,
                                                     pts[i].second + oy, pts[i + 1].first + ox,
                                                     pts[i + 1].second + oy));
    return best;
}

template <typename Fn>
inline void for_each_disk_pixel(const PhantomDisk& d, int width, int height, Fn&& fn) {
    int x0 = std::max(0, static_cast<int>(std::floor(d.cx - d.r)));
    int x1 = std::min(width - 1, static_cast<int>(std::ceil(d.cx + d.r)));
    int y0 = std::max(0, static_cast<int>(std::floor(d.cy - d.r)));
    int y1 = std::min(height - 1, static_cast<int>(std::ceil(d.cy + d.r)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double dx = static_cast<double>(x) - d.cx;
            double dy = static_cast<double>(y) - d.cy;
            if (dx * dx + dy * dy <= d.r * d.r) fn(x, y);
        }
}

// Separable Gaussian blur with replicate borders, radius 3*sigma.
inline std::vector<double> gaussian_smooth(const std::vector<double>& src, int width, int height,
                                           double sigma) {
    if (sigma <= 0.0) return src;
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;
    std::vector<double> tmp(src.size()), out(src.size());
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] *
                       src[static_cast<std::size_t>(y) * width + std::clamp(x + i, 0, width - 1)];
            tmp[static_cast<std::size_t>(y) * width + x] = acc;
        }
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] *
                       tmp[static_cast<std::size_t>(std::clamp(y + i, 0, height - 1)) * width + x];
            out[static_cast<std::size_t>(y) * width + x] = acc;
        }
    return out;
}

}  // namespace detail

inline PhantomOutput generate_phantom(const PhantomConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.rng_seed);
    const int w = cfg.width, h = cfg.height, depth = cfg.depth;
    PhantomManifest manifest;
    manifest.width = w;
    manifest.height = h;
    manifest.depth = depth;

    // --- blobs -----------------------------------------------------------
    for (int b = 0; b < cfg.blob_count; ++b) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            PhantomBlob blob;
            blob.r = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max);
            double margin = blob.r + 4.0;
            if (2.0 * margin >= std::min(w, h))
                throw ValidationError("phantom: blob " + std::to_string(b) +
                                      " cannot fit the slice");
            blob.cx = rng.uniform(margin, w - 1 - margin);
            blob.cy = rng.uniform(margin, h - 1 - margin);
            blob.slice_offsets.assign(depth, {0.0, 0.0});
            for (int z = 1; z < depth; ++z)
                blob.slice_offsets[z] = {
                    blob.slice_offsets[z - 1].first + rng.uniform(-1.0, 1.0),
                    blob.slice_offsets[z - 1].second + rng.uniform(-1.0, 1.0)};
            bool ok = true;
            for (const PhantomBlob& other : manifest.blobs)
                if (std::hypot(blob.cx - other.cx, blob.cy - other.cy) <
                    blob.r + other.r + 10.0) {
                    ok = false;
                    break;
                }
            if (ok) {
                manifest.blobs.push_back(std::move(blob));
                placed = true;
            }
        }
        if (!placed)
            throw ValidationError("phantom: could not place blob " + std::to_string(b) +
                                  " after 1000 attempts");
    }

    // --- placement predicates ----------------------------------------------
    auto disk_clear_of_blobs = [&](double cx, double cy, double r, int z) {
        for (const PhantomBlob& blob : manifest.blobs) {
            double bx = blob.cx + blob.slice_offsets[z].first;
            double by = blob.cy + blob.slice_offsets[z].second;
            if (std::hypot(cx - bx, cy - by) < r + blob.r + 4.0) return false;
        }
        return true;
    };
    auto disk_clear_of_tracks = [&](double cx, double cy, double r, int z,
                                    const PhantomTrack* self) {
        for (const PhantomTrack& track : manifest.tracks) {
            if (&track == self) continue;
            for (const PhantomDisk& d : track.instances) {
                if (std::abs(d.z - z) > 1) continue;
                double dist = std::hypot(cx - d.cx, cy - d.cy);
                if (d.z == z && dist < r + d.r + 6.0) return false;
                if (dist < detail::kAdjacentClearance) return false;
            }
        }
        return true;
    };
    auto clear_of_borderline_windows = [&](double cx, double cy, double r, int z) {
        for (const PhantomTrack& track : manifest.tracks)
            for (const PhantomDisk& d : track.instances) {
                if (!d.borderline || d.z != z) continue;
                double cheb = std::max(std::abs(cx - d.cx), std::abs(cy - d.cy));
                if (cheb <= detail::kBorderlineWindowHalf + r + 1.0) return false;
            }
        return true;
    };
    auto window_clear_of_blobs = [&](double cx, double cy, int z) {
        double reach = static_cast<double>(detail::kBorderlineWindowHalf);
        for (const PhantomBlob& blob : manifest.blobs) {
            double bx = blob.cx + blob.slice_offsets[z].first;
            double by = blob.cy + blob.slice_offsets[z].second;
            double cheb = std::max(std::abs(cx - bx), std::abs(cy - by));
            if (cheb <= reach + blob.r + 2.0) return false;
        }
        return true;
    };
    auto disk_clear_of_membranes = [&](double cx, double cy, double r, int z) {
        for (const PhantomMembrane& mem : manifest.membranes) {
            double dist = detail::point_polyline_distance(cx, cy, mem.points,
                                                          mem.slice_offsets[z].first,
                                                          mem.slice_offsets[z].second);
            if (dist <= r + mem.width / 2.0 + 3.0) return false;
        }
        return true;
    };

    auto place_track = [&](int t, bool host) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            PhantomTrack track;
            track.label = t + 1;
            double r = rng.uniform(cfg.ar_radius_min, cfg.ar_radius_max);
            int span_min = host ? std::max(3, cfg.ar_span_min) : cfg.ar_span_min;
            int span = static_cast<int>(rng.uniform_int(span_min, cfg.ar_span_max));
            span = std::min(span, depth);
            int z0 = static_cast<int>(rng.uniform_int(0, depth - span));
            double margin = r + 6.0;
            double cx = rng.uniform(margin, w - 1 - margin);
            double cy = rng.uniform(margin, h - 1 - margin);
            for (int i = 0; i < span; ++i) {
                if (i > 0) {
                    cx = std::clamp(cx + rng.uniform(-cfg.ar_jitter_max, cfg.ar_jitter_max),
                                    margin, w - 1 - margin);
                    cy = std::clamp(cy + rng.uniform(-cfg.ar_jitter_max, cfg.ar_jitter_max),
                                    margin, h - 1 - margin);
                }
                track.instances.push_back({z0 + i, cx, cy, r, cfg.ar_intensity, false});
            }
            bool ok = true;
            for (const PhantomDisk& d : track.instances) {
                if (!disk_clear_of_blobs(d.cx, d.cy, d.r, d.z) ||
                    !disk_clear_of_tracks(d.cx, d.cy, d.r, d.z, nullptr) ||
                    !disk_clear_of_membranes(d.cx, d.cy, d.r, d.z) ||
                    !clear_of_borderline_windows(d.cx, d.cy, d.r, d.z)) {
                    ok = false;
                    break;
                }
            }
            if (ok && host) {
                PhantomDisk& mid = track.instances[track.instances.size() / 2];
                if (!window_clear_of_blobs(mid.cx, mid.cy, mid.z)) {
                    ok = false;
                } else {
                    mid.borderline = true;
                    mid.intensity = cfg.borderline_intensity;
                }
            }
            if (ok) {
                manifest.tracks.push_back(std::move(track));
                placed = true;
            }
        }
        if (!placed)
            throw ValidationError("phantom: could not place ar track " + std::to_string(t) +
                                  " after 1000 attempts");
    };

    // --- borderline-host tracks claim their recovery windows first ----------
    for (int t = 0; t < cfg.borderline_count; ++t) place_track(t, true);

    // --- membranes: free-form polylines that stay out of host windows -------
    for (int m = 0; m < cfg.membrane_count; ++m) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            PhantomMembrane mem;
            mem.width = static_cast<double>(
                rng.uniform_int(cfg.membrane_width_min, cfg.membrane_width_max));
            int side = static_cast<int>(rng.uniform_int(0, 3));
            double along = rng.uniform(0.0, 1.0);
            double x = side == 1 ? (w - 1) : side == 3 ? 0.0 : along * (w - 1);
            double y = side == 0 ? 0.0 : side == 2 ? (h - 1) : along * (h - 1);
            double heading = std::atan2(h / 2.0 - y, w / 2.0 - x) + rng.uniform(-0.6, 0.6);
            mem.points.emplace_back(x, y);
            int segments = static_cast<int>(rng.uniform_int(3, 6));
            for (int s = 0; s < segments; ++s) {
                double len = rng.uniform(50.0, 110.0);
                x += len * std::cos(heading);
                y += len * std::sin(heading);
                mem.points.emplace_back(x, y);
                heading += rng.uniform(-0.7, 0.7);
            }
            mem.slice_offsets.assign(depth, {0.0, 0.0});
            for (int z = 1; z < depth; ++z)
                mem.slice_offsets[z] = {
                    mem.slice_offsets[z - 1].first + rng.uniform(-0.7, 0.7),
                    mem.slice_offsets[z - 1].second + rng.uniform(-0.7, 0.7)};

            // The stroke must stay out of borderline recovery windows and off
            // the already-placed host disks.
            bool ok = true;
            for (const PhantomTrack& track : manifest.tracks) {
                for (const PhantomDisk& d : track.instances) {
                    double ox = mem.slice_offsets[d.z].first;
                    double oy = mem.slice_offsets[d.z].second;
                    if (detail::point_polyline_distance(d.cx, d.cy, mem.points, ox, oy) <=
                        d.r + mem.width / 2.0 + 3.0) {
                        ok = false;
                        break;
                    }
                    if (!d.borderline) continue;
                    double clearance = detail::kBorderlineWindowHalf + mem.width / 2.0 + 2.0;
                    for (std::size_t i = 0; i + 1 < mem.points.size() && ok; ++i) {
                        double ax = mem.points[i].first + ox, ay = mem.points[i].second + oy;
                        double bx = mem.points[i + 1].first + ox,
                               by = mem.points[i + 1].second + oy;
                        int steps = std::max(2, static_cast<int>(std::hypot(bx - ax, by - ay)));
                        for (int si = 0; si <= steps; ++si) {
                            double tt = static_cast<double>(si) / steps;
                            double px = ax + tt * (bx - ax), py = ay + tt * (by - ay);
                            if (std::max(std::abs(d.cx - px), std::abs(d.cy - py)) <=
                                clearance) {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if (!ok) break;
                }
                if (!ok) break;
            }
            if (ok) {
                manifest.membranes.push_back(std::move(mem));
                placed = true;
            }
        }
        if (!placed)
            throw ValidationError("phantom: could not place membrane " + std::to_string(m) +
                                  " after 1000 attempts");
    }

    // --- remaining AR tracks ------------------------------------------------
    for (int t = cfg.borderline_count; t < cfg.ar_track_count; ++t) place_track(t, false);

    // --- distractors -------------------------------------------------------
    auto distractor_clear = [&](double cx, double cy, double r, int z) {
        if (!disk_clear_of_blobs(cx, cy, r, z)) return false;
        if (!disk_clear_of_membranes(cx, cy, r, z)) return false;
        for (const PhantomTrack& track : manifest.tracks)
            for (const PhantomDisk& d : track.instances) {
                if (std::abs(d.z - z) > 1) continue;
                double dist = std::hypot(cx - d.cx, cy - d.cy);
                if (d.z == z && dist < r + d.r + 6.0) return false;
                if (dist < detail::kAdjacentClearance) return false;
            }
        for (const PhantomDistractor& other : manifest.distractors) {
            if (std::abs(other.disk.z - z) > 1) continue;
            double dist = std::hypot(cx - other.disk.cx, cy - other.disk.cy);
            if (other.disk.z == z && dist < r + other.disk.r + 6.0) return false;
            if (dist < detail::kAdjacentClearance) return false;
        }
        return clear_of_borderline_windows(cx, cy, r, z);
    };
    for (int d = 0; d < cfg.distractor_count; ++d) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            double r = rng.uniform(cfg.ar_radius_min, cfg.ar_radius_max);
            double margin = r + 6.0;
            int z = static_cast<int>(rng.uniform_int(0, depth - 1));
            double cx = rng.uniform(margin, w - 1 - margin);
            double cy = rng.uniform(margin, h - 1 - margin);
            if (distractor_clear(cx, cy, r, z)) {
                PhantomDistractor dist;
                dist.label = cfg.ar_track_count + d + 1;
                dist.disk = {z, cx, cy, r, cfg.ar_intensity, false};
                manifest.distractors.push_back(dist);
                manifest.spurious_labels.push_back(dist.label);
                placed = true;
            }
        }
        if (!placed)
            throw ValidationError("phantom: could not place distractor " + std::to_string(d) +
                                  " after 1000 attempts");
    }

    // --- render ------------------------------------------------------------
    PhantomOutput out;
    out.manifest = manifest;
    out.truth = LabelVolume(w, h, depth);
    out.stack.dims = VoxelDims{};
    const std::size_t n = static_cast<std::size_t>(w) * h;
    for (int z = 0; z < depth; ++z) {
        std::vector<double> noise(n);
        for (double& v : noise) v = rng.normal(0.0, cfg.background_noise_sigma);
        noise = detail::gaussian_smooth(noise, w, h, cfg.noise_smooth_sigma);

        std::vector<double> entity(n, std::numeric_limits<double>::infinity());
        auto darken = [&](int x, int y, double value) {
            std::size_t i = static_cast<std::size_t>(y) * w + x;
            entity[i] = std::min(entity[i], value);
        };
        for (const PhantomBlob& blob : manifest.blobs) {
            PhantomDisk d{z, blob.cx + blob.slice_offsets[z].first,
                          blob.cy + blob.slice_offsets[z].second, blob.r, cfg.blob_intensity,
                          false};
            detail::for_each_disk_pixel(d, w, h, [&](int x, int y) {
                darken(x, y, cfg.blob_intensity);
            });
        }
        for (const PhantomMembrane& mem : manifest.membranes) {
            double ox = mem.slice_offsets[z].first, oy = mem.slice_offsets[z].second;
            double half = mem.width / 2.0;
            for (std::size_t i = 0; i + 1 < mem.points.size(); ++i) {
                double ax = mem.points[i].first + ox, ay = mem.points[i].second + oy;
                double bx = mem.points[i + 1].first + ox, by = mem.points[i + 1].second + oy;
                int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - half)));
                int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(ax, bx) + half)));
                int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - half)));
                int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(ay, by) + half)));
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x)
                        if (detail::point_segment_distance(x, y, ax, ay, bx, by) <= half)
                            darken(x, y, cfg.membrane_intensity);
            }
        }
        std::vector<const PhantomDisk*> borderline_here;
        auto draw_labeled_disk = [&](const PhantomDisk& d, int label) {
            if (d.z != z) return;
            if (d.borderline) {
                borderline_here.push_back(&d);
            } else {
                detail::for_each_disk_pixel(d, w, h,
                                            [&](int x, int y) { darken(x, y, d.intensity); });
            }
            detail::for_each_disk_pixel(d, w, h, [&](int x, int y) {
                out.truth.at(x, y, z) = static_cast<std::uint16_t>(label);
            });
        };
        for (const PhantomTrack& track : manifest.tracks)
            for (const PhantomDisk& d : track.instances) draw_labeled_disk(d, track.label);
        for (const PhantomDistractor& dist : manifest.distractors)
            draw_labeled_disk(dist.disk, dist.label);

        Slice slice = make_slice(z, w, h);
        for (std::size_t i = 0; i < n; ++i) {
            double base = std::isinf(entity[i]) ? cfg.background_mean : entity[i];
            slice.intensities[i] = std::clamp(base + noise[i], 0.0, 1.0);
        }
        // Borderline instances are rendered at their exact intensity so the
        // strict/relaxed threshold behavior is guaranteed, not probabilistic.
        for (const PhantomDisk* d : borderline_here)
            detail::for_each_disk_pixel(*d, w, h, [&](int x, int y) {
                slice.intensities[slice.idx(x, y)] = d->intensity;
            });
        out.stack.slices.push_back(std::move(slice));
    }
    return out;
}

}  // namespace arpipe
