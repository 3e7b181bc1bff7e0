#pragma once

// Instance-level precision/recall against ground-truth label maps. Truth
// instances are per-slice 8-connected components of equal labels; predictions
// match them by IoU, centroid proximity, or either, with a greedy one-to-one
// assignment in descending IoU order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "arpipe/errors.hpp"
#include "arpipe/parallel.hpp"
#include "arpipe/volume.hpp"

namespace arpipe {

// Published baseline figures for AR annotation on full-resolution EM volumes,
// echoed in every report for context. Phantom runs are not comparable to
// them; they gate against their own thresholds.
inline constexpr double kReferenceBaselinePrecision = 0.87;
inline constexpr double kReferenceBaselineRecall = 0.52;

struct EvalParams {
    enum class Mode { iou, centroid, either };

    double tau_iou = 0.3;   // IoU threshold for a match
    double d_match = 5.0;   // centroid-distance alternative, pixels
    Mode mode = Mode::either;

    void validate() const {
        if (!(tau_iou > 0.0 && tau_iou <= 1.0))
            throw ValidationError("eval tau_iou must be in (0,1]");
        if (!(d_match > 0.0)) throw ValidationError("eval d_match must be > 0");
    }
};

inline const char* to_string(EvalParams::Mode m) {
    switch (m) {
        case EvalParams::Mode::iou: return "iou";
        case EvalParams::Mode::centroid: return "centroid";
        case EvalParams::Mode::either: return "either";
    }
    return "unknown";
}

struct TruthInstance {
    int label = 0;
    RleMask mask;
    double cx = 0.0, cy = 0.0;
};

// Maximal same-label 8-connected components of one label map, ordered by
// first pixel in scan order.
inline std::vector<TruthInstance> truth_instances(const std::vector<std::uint16_t>& labels,
                                                  int width, int height) {
    std::vector<TruthInstance> out;
    std::vector<std::uint8_t> seen(labels.size(), 0);
    static constexpr int kOffsets[8][2] = {{-1, -1}, {0, -1}, {1, -1}, {-1, 0},
                                           {1, 0},   {-1, 1}, {0, 1},  {1, 1}};
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            std::size_t start = static_cast<std::size_t>(y) * width + x;
            if (seen[start] || labels[start] == 0) continue;
            std::uint16_t label = labels[start];
            std::vector<std::pair<int, int>> pixels;
            std::vector<std::pair<int, int>> stack_px{{x, y}};
            seen[start] = 1;
            while (!stack_px.empty()) {
                auto [px, py] = stack_px.back();
                stack_px.pop_back();
                pixels.emplace_back(px, py);
                for (const auto& off : kOffsets) {
                    int nx = px + off[0], ny = py + off[1];
                    if (nx < 0 || nx >= width || ny < 0 || ny >= height) continue;
                    std::size_t ni = static_cast<std::size_t>(ny) * width + nx;
                    if (seen[ni] || labels[ni] != label) continue;
                    seen[ni] = 1;
                    stack_px.emplace_back(nx, ny);
                }
            }
            TruthInstance inst;
            inst.label = label;
            inst.mask = RleMask::from_pixels(std::move(pixels));
            auto [cx, cy] = inst.mask.centroid();
            inst.cx = cx;
            inst.cy = cy;
            out.push_back(std::move(inst));
        }
    }
    return out;
}

struct MatchedPair {
    int prediction_index = 0;
    int truth_index = 0;
    int truth_label = 0;
    double iou = 0.0;
    double centroid_distance = 0.0;
};

struct SliceMatching {
    std::vector<MatchedPair> matches;
    int tp = 0, fp = 0, fn = 0;
};

inline SliceMatching match_predictions(const std::vector<Region>& predictions,
                                       const std::vector<std::uint16_t>& truth_map, int width,
                                       int height, const EvalParams& params) {
    params.validate();
    for (const Region& r : predictions)
        if (!r.mask.within_bounds(width, height))
            throw ValidationError("match_predictions: prediction exceeds label map bounds");

    std::vector<TruthInstance> truths = truth_instances(truth_map, width, height);

    struct Candidate {
        int pred = 0, truth = 0;
        double iou = 0.0, dist = 0.0;
    };
    std::vector<Candidate> candidates;
    for (std::size_t pi = 0; pi < predictions.size(); ++pi) {
        auto [pcx, pcy] = predictions[pi].mask.centroid();
        for (std::size_t ti = 0; ti < truths.size(); ++ti) {
            int inter = RleMask::intersection_area(predictions[pi].mask, truths[ti].mask);
            int uni = predictions[pi].mask.area() + truths[ti].mask.area() - inter;
            double iou = uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
            double dist = std::hypot(pcx - truths[ti].cx, pcy - truths[ti].cy);
            bool by_iou = iou >= params.tau_iou;
            bool by_centroid = dist <= params.d_match;
            bool eligible = params.mode == EvalParams::Mode::iou
                                ? by_iou
                                : params.mode == EvalParams::Mode::centroid
                                      ? by_centroid
                                      : (by_iou || by_centroid);
            if (eligible)
                candidates.push_back({static_cast<int>(pi), static_cast<int>(ti), iou, dist});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.dist != b.dist) return a.dist < b.dist;
        if (truths[a.truth].label != truths[b.truth].label)
            return truths[a.truth].label < truths[b.truth].label;
        if (a.pred != b.pred) return a.pred < b.pred;
        return a.truth < b.truth;
    });

    SliceMatching result;
    std::vector<std::uint8_t> pred_taken(predictions.size(), 0), truth_taken(truths.size(), 0);
    for (const Candidate& c : candidates) {
        if (pred_taken[c.pred] || truth_taken[c.truth]) continue;
        pred_taken[c.pred] = 1;
        truth_taken[c.truth] = 1;
        result.matches.push_back({c.pred, c.truth, truths[c.truth].label, c.iou, c.dist});
    }
    result.tp = static_cast<int>(result.matches.size());
    result.fp = static_cast<int>(predictions.size()) - result.tp;
    result.fn = static_cast<int>(truths.size()) - result.tp;
    return result;
}

struct EvalSlice {
    int z = 0;
    int tp = 0, fp = 0, fn = 0;
};

struct EvalReport {
    int tp = 0, fp = 0, fn = 0;
    double precision = 1.0, recall = 1.0;
    bool degenerate_precision = false;  // TP+FP == 0, precision pinned to 1
    bool degenerate_recall = false;     // TP+FN == 0, recall pinned to 1
    std::vector<EvalSlice> slices;
    std::vector<std::pair<int, MatchedPair>> matches;  // (z, pair)
};

inline EvalReport evaluate(const AnnotationSet& set, const LabelVolume& truth,
                           const EvalParams& params, int workers = 0) {
    params.validate();
    if (set.width != truth.width || set.height != truth.height || set.depth() != truth.depth())
        throw ValidationError("evaluate: annotation set and truth dimensions differ");

    const int depth = set.depth();
    std::vector<SliceMatching> per_slice(depth);
    parallel_for(static_cast<std::size_t>(depth), workers, [&](std::size_t z) {
        per_slice[z] =
            match_predictions(set.by_z[z], truth.slices[z], set.width, set.height, params);
    });

    EvalReport report;
    for (int z = 0; z < depth; ++z) {
        const SliceMatching& m = per_slice[z];
        report.slices.push_back({z, m.tp, m.fp, m.fn});
        report.tp += m.tp;
        report.fp += m.fp;
        report.fn += m.fn;
        for (const MatchedPair& pair : m.matches) report.matches.emplace_back(z, pair);
    }
    if (report.tp + report.fp == 0) {
        report.degenerate_precision = true;
        report.precision = 1.0;
    } else {
        report.precision = static_cast<double>(report.tp) /
                           static_cast<double>(report.tp + report.fp);
    }
    if (report.tp + report.fn == 0) {
        report.degenerate_recall = true;
        report.recall = 1.0;
    } else {
        report.recall =
            static_cast<double>(report.tp) / static_cast<double>(report.tp + report.fn);
    }
    return report;
}

// Zeroes out the given labels; the eval harness uses this to drop entities
// flagged as spurious in a phantom manifest from the truth.
inline LabelVolume remove_labels(LabelVolume volume, const std::vector<int>& labels) {
    std::vector<std::uint8_t> drop(65536, 0);
    for (int l : labels)
        if (l > 0 && l < 65536) drop[static_cast<std::size_t>(l)] = 1;
    for (auto& slice : volume.slices)
        for (auto& px : slice)
            if (drop[px]) px = 0;
    return volume;
}

}  // namespace arpipe
