#pragma once

// Stage runners and the end-to-end pipeline. Every stage reads its inputs
// from disk and writes a complete output directory, so running stages
// individually reproduces a full pipeline run byte for byte. Stages write
// into a temporary sibling directory that is renamed on success; failures
// never leave partial outputs.

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "arpipe/annotations_io.hpp"
#include "arpipe/config.hpp"
#include "arpipe/detect.hpp"
#include "arpipe/errors.hpp"
#include "arpipe/evaluate.hpp"
#include "arpipe/filters.hpp"
#include "arpipe/gradient_correct.hpp"
#include "arpipe/overlay.hpp"
#include "arpipe/persistence.hpp"
#include "arpipe/phantom_io.hpp"
#include "arpipe/png_io.hpp"
#include "arpipe/stack_io.hpp"
#include "arpipe/volume.hpp"

namespace arpipe {

namespace detail {

// Writes into "<target>.tmp" and renames over the target on commit.
class StagedDir {
public:
    explicit StagedDir(std::filesystem::path target)
        : target_(std::move(target)), tmp_(target_.string() + ".tmp") {
        std::error_code ec;
        std::filesystem::remove_all(tmp_, ec);
        std::filesystem::create_directories(tmp_);
    }

    ~StagedDir() {
        if (!committed_) {
            std::error_code ec;
            std::filesystem::remove_all(tmp_, ec);
        }
    }

    const std::filesystem::path& path() const { return tmp_; }

    void commit() {
        std::error_code ec;
        std::filesystem::remove_all(target_, ec);
        std::filesystem::rename(tmp_, target_);
        committed_ = true;
    }

private:
    std::filesystem::path target_;
    std::filesystem::path tmp_;
    bool committed_ = false;
};

inline void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace detail

inline nlohmann::ordered_json correction_report_to_json(const CorrectionReport& report) {
    nlohmann::ordered_json j;
    j["alpha"] = report.alpha;
    j["tol"] = report.tol;
    j["slices"] = nlohmann::ordered_json::array();
    for (const SliceCorrectionInfo& s : report.slices)
        j["slices"].push_back({{"z", s.z},
                               {"iterations", s.iterations},
                               {"final_residual", s.final_residual},
                               {"mean_before", s.mean_before},
                               {"mean_after", s.mean_after},
                               {"converged", s.converged}});
    return j;
}

inline nlohmann::ordered_json detect_log_to_json(const DetectLog& log) {
    auto variant_json = [](const VariantCounts& c) {
        return nlohmann::ordered_json{{"seeds", c.seeds},
                                      {"suppressed", c.suppressed},
                                      {"grown", c.grown},
                                      {"accepted", c.accepted},
                                      {"rejected",
                                       {{"oversize", c.oversize},
                                        {"size", c.rejected_size},
                                        {"shape-circularity", c.rejected_circularity},
                                        {"shape-aspect", c.rejected_aspect},
                                        {"color-contrast", c.rejected_contrast}}}};
    };
    nlohmann::ordered_json j;
    j["slices"] = nlohmann::ordered_json::array();
    for (const SliceDetectLog& s : log.slices)
        j["slices"].push_back({{"z", s.z},
                               {"bilateral", variant_json(s.bilateral)},
                               {"sharpened", variant_json(s.sharpened)},
                               {"merged_duplicates", s.merged_duplicates},
                               {"regions", s.regions}});
    j["total_regions"] = log.total_regions;
    return j;
}

inline nlohmann::ordered_json persist_report_to_json(const PersistReport& report) {
    nlohmann::ordered_json j;
    j["input_regions"] = report.input_regions;
    j["kept"] = report.kept;
    j["removed"] = report.removed;
    j["recovered"] = report.recovered;
    j["tracks"] = report.tracks;
    j["slices"] = nlohmann::ordered_json::array();
    for (const PersistSliceInfo& s : report.slices)
        j["slices"].push_back({{"z", s.z},
                               {"kept", s.kept},
                               {"removed", s.removed},
                               {"recovered", s.recovered}});
    return j;
}

inline nlohmann::ordered_json eval_report_to_json(const EvalReport& report,
                                                  const EvalParams& params,
                                                  const std::vector<int>& excluded_labels) {
    nlohmann::ordered_json j;
    j["reference_baseline"] = {{"precision", kReferenceBaselinePrecision},
                               {"recall", kReferenceBaselineRecall},
                               {"note", "published full-scale EM baseline, for context only"}};
    j["params"] = {{"tau_iou", params.tau_iou},
                   {"d_match", params.d_match},
                   {"mode", to_string(params.mode)}};
    j["excluded_spurious_labels"] = excluded_labels;
    j["aggregate"] = {{"tp", report.tp},
                      {"fp", report.fp},
                      {"fn", report.fn},
                      {"precision", report.precision},
                      {"recall", report.recall},
                      {"degenerate_precision", report.degenerate_precision},
                      {"degenerate_recall", report.degenerate_recall}};
    j["slices"] = nlohmann::ordered_json::array();
    for (const EvalSlice& s : report.slices)
        j["slices"].push_back({{"z", s.z}, {"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}});
    j["matches"] = nlohmann::ordered_json::array();
    for (const auto& [z, m] : report.matches)
        j["matches"].push_back({{"z", z},
                                {"prediction_index", m.prediction_index},
                                {"truth_label", m.truth_label},
                                {"iou", m.iou},
                                {"centroid_distance", m.centroid_distance}});
    return j;
}

namespace stage {

namespace fs = std::filesystem;

inline void phantom(const fs::path& out_dir, const PhantomConfig& cfg) {
    PhantomOutput output = generate_phantom(cfg);
    detail::StagedDir staged(out_dir);
    save_phantom(output, staged.path());
    staged.commit();
}

inline CorrectionReport correct(const fs::path& in_stack, const fs::path& out_dir,
                                const CorrectionParams& params, int workers) {
    Stack stack = load_stack(in_stack);
    CorrectionReport report;
    Stack corrected = correct_stack(stack, params, workers, &report);
    detail::StagedDir staged(out_dir);
    save_stack(corrected, staged.path(), 16);
    detail::write_json_file(staged.path() / "correction_report.json",
                            correction_report_to_json(report));
    staged.commit();
    return report;
}

inline void filter(const fs::path& in_stack, const fs::path& out_dir,
                   const BilateralParams& bilateral_params, const SharpenParams& sharpen_params,
                   int workers) {
    Stack stack = load_stack(in_stack);
    Stack bil = bilateral_stack(stack, bilateral_params, workers);
    Stack shp = sharpen_stack(bil, sharpen_params, workers);
    detail::StagedDir staged(out_dir);
    save_stack(bil, staged.path() / "bilateral", 16);
    save_stack(shp, staged.path() / "sharpened", 16);
    staged.commit();
}

inline DetectLog detect(const fs::path& in_filtered, const fs::path& out_dir,
                        const DetectParams& params, int workers) {
    Stack bil = load_stack(in_filtered / "bilateral");
    Stack shp = load_stack(in_filtered / "sharpened");
    DetectLog log;
    AnnotationSet set = detect_stack(bil, shp, params, workers, &log);
    detail::StagedDir staged(out_dir);
    save_annotations(set, bil, staged.path(), params.ring_width);
    detail::write_json_file(staged.path() / "detect_log.json", detect_log_to_json(log));
    staged.commit();
    return log;
}

inline PersistReport check(const fs::path& in_annotations, const fs::path& in_bilateral,
                           const fs::path& out_dir, const DetectParams& detect_params,
                           const PersistParams& persist_params, int workers) {
    AnnotationSet set = load_annotations(in_annotations);
    Stack bil = load_stack(in_bilateral);
    auto [filtered, report] =
        persistence_filter(set, bil, detect_params, persist_params, workers);
    detail::StagedDir staged(out_dir);
    save_annotations(filtered, bil, staged.path(), detect_params.ring_width);
    detail::write_json_file(staged.path() / "persist_report.json",
                            persist_report_to_json(report));
    staged.commit();
    return report;
}

inline EvalReport eval(const fs::path& in_annotations, const fs::path& truth_dir,
                       const fs::path& out_file, const EvalParams& params, int workers) {
    AnnotationSet set = load_annotations(in_annotations);
    LabelVolume truth = load_label_volume(truth_dir);
    std::vector<int> spurious = find_spurious_labels(truth_dir);
    if (!spurious.empty()) truth = remove_labels(std::move(truth), spurious);
    EvalReport report = evaluate(set, truth, params, workers);
    fs::create_directories(out_file.parent_path());
    detail::write_json_file(out_file, eval_report_to_json(report, params, spurious));
    return report;
}

inline void overlay(const fs::path& in_stack, const fs::path& in_annotations,
                    const fs::path& out_dir, int workers) {
    Stack stack = load_stack(in_stack);
    AnnotationSet set = load_annotations(in_annotations);
    if (set.width != stack.width() || set.height != stack.height() ||
        set.depth() != stack.depth())
        throw ValidationError("overlay: annotations do not match the stack");
    detail::StagedDir staged(out_dir);
    std::vector<std::vector<std::uint8_t>> rendered(stack.depth());
    parallel_for(static_cast<std::size_t>(stack.depth()), workers, [&](std::size_t z) {
        rendered[z] = render_overlay(stack.slices[z], set.by_z[z]);
    });
    for (int z = 0; z < stack.depth(); ++z) {
        char name[24];
        std::snprintf(name, sizeof(name), "overlay_z%04d.png", z);
        write_rgb_png8(staged.path() / name, stack.width(), stack.height(), rendered[z]);
    }
    staged.commit();
}

}  // namespace stage

struct PipelineResult {
    CorrectionReport correction;
    bool corrected = false;
    DetectLog detect_log;
    PersistReport persist;
    EvalReport eval;
    bool evaluated = false;
};

// correct -> filter -> detect -> check -> (eval) -> (overlay), file-mediated.
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
    namespace fs = std::filesystem;
    if (cfg.input.empty()) throw ConfigError("pipeline requires an input stack directory");
    if (cfg.output.empty()) throw ConfigError("pipeline requires an output directory");
    const fs::path in(cfg.input);
    const fs::path out(cfg.output);
    fs::create_directories(out);

    PipelineResult result;
    fs::path corrected_dir = out / "corrected";
    if (cfg.skip_correct) {
        corrected_dir = in;
    } else {
        result.correction = stage::correct(in, corrected_dir, cfg.correction, cfg.workers);
        result.corrected = true;
    }
    stage::filter(corrected_dir, out / "filtered", cfg.bilateral, cfg.sharpen, cfg.workers);
    result.detect_log =
        stage::detect(out / "filtered", out / "detected", cfg.detect, cfg.workers);
    result.persist = stage::check(out / "detected", out / "filtered" / "bilateral",
                                  out / "checked", cfg.detect, cfg.persist, cfg.workers);
    if (!cfg.truth.empty()) {
        result.eval = stage::eval(out / "checked", fs::path(cfg.truth),
                                  out / "eval_report.json", cfg.eval, cfg.workers);
        result.evaluated = true;
    }
    if (!cfg.skip_overlay) stage::overlay(in, out / "checked", out / "overlays", cfg.workers);

    nlohmann::ordered_json report;
    report["config"] = config_to_json(cfg);
    report["stages"] = nlohmann::ordered_json::object();
    report["stages"]["correct"] =
        result.corrected ? correction_report_to_json(result.correction)
                         : nlohmann::ordered_json("skipped");
    report["stages"]["detect"] = detect_log_to_json(result.detect_log);
    report["stages"]["check"] = persist_report_to_json(result.persist);
    if (result.evaluated) {
        std::vector<int> spurious = find_spurious_labels(fs::path(cfg.truth));
        report["stages"]["eval"] = eval_report_to_json(result.eval, cfg.eval, spurious);
    }
    detail::write_json_file(out / "pipeline_report.json", report);
    return result;
}

}  // namespace arpipe
