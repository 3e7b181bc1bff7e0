#pragma once

// Pipeline configuration: a single JSON file reaching every tunable
// parameter. Parsing is strict: an unrecognized key anywhere is an error
// naming the key, so typos never silently fall back to defaults.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "arpipe/detect.hpp"
#include "arpipe/errors.hpp"
#include "arpipe/evaluate.hpp"
#include "arpipe/filters.hpp"
#include "arpipe/gradient_correct.hpp"
#include "arpipe/persistence.hpp"
#include "arpipe/phantom.hpp"

namespace arpipe {

struct PipelineConfig {
    std::string input;
    std::string output;
    std::string truth;
    int workers = 0;  // 0 = hardware concurrency
    bool skip_correct = false;
    bool skip_overlay = false;

    CorrectionParams correction;
    BilateralParams bilateral;
    SharpenParams sharpen;
    DetectParams detect;
    PersistParams persist;
    EvalParams eval;
    PhantomConfig phantom;
};

namespace detail {

template <typename T>
inline T config_get(const nlohmann::json& value, const std::string& key) {
    try {
        return value.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

inline void expect_object(const nlohmann::json& j, const std::string& key) {
    if (!j.is_object()) throw ConfigError("config key '" + key + "' must be an object");
}

}  // namespace detail

inline PipelineConfig parse_pipeline_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    PipelineConfig cfg;
    using detail::config_get;
    for (const auto& [key, value] : j.items()) {
        if (key == "input") {
            cfg.input = config_get<std::string>(value, key);
        } else if (key == "output") {
            cfg.output = config_get<std::string>(value, key);
        } else if (key == "truth") {
            cfg.truth = config_get<std::string>(value, key);
        } else if (key == "workers") {
            cfg.workers = config_get<int>(value, key);
            if (cfg.workers < 0) throw ConfigError("workers must be >= 0");
        } else if (key == "skip_correct") {
            cfg.skip_correct = config_get<bool>(value, key);
        } else if (key == "skip_overlay") {
            cfg.skip_overlay = config_get<bool>(value, key);
        } else if (key == "correction") {
            detail::expect_object(value, key);
            for (const auto& [k, v] : value.items()) {
                if (k == "alpha")
                    cfg.correction.alpha = config_get<double>(v, "correction.alpha");
                else if (k == "tol")
                    cfg.correction.tol = config_get<double>(v, "correction.tol");
                else if (k == "max_iter")
                    cfg.correction.max_iter = config_get<int>(v, "correction.max_iter");
                else
                    throw ConfigError("unknown config key: correction." + k);
            }
        } else if (key == "bilateral") {
            detail::expect_object(value, key);
            for (const auto& [k, v] : value.items()) {
                if (k == "sigma_s")
                    cfg.bilateral.sigma_s = config_get<double>(v, "bilateral.sigma_s");
                else if (k == "sigma_r")
                    cfg.bilateral.sigma_r = config_get<double>(v, "bilateral.sigma_r");
                else if (k == "radius")
                    cfg.bilateral.radius = config_get<int>(v, "bilateral.radius");
                else
                    throw ConfigError("unknown config key: bilateral." + k);
            }
        } else if (key == "sharpen") {
            detail::expect_object(value, key);
            for (const auto& [k, v] : value.items()) {
                if (k == "lambda") {
                    cfg.sharpen.lambda = config_get<double>(v, "sharpen.lambda");
                } else if (k == "neighborhood") {
                    std::string nb = config_get<std::string>(v, "sharpen.neighborhood");
                    if (nb == "four")
                        cfg.sharpen.neighborhood = SharpenParams::Neighborhood::four;
                    else if (nb == "eight")
                        cfg.sharpen.neighborhood = SharpenParams::Neighborhood::eight;
                    else
                        throw ConfigError("sharpen.neighborhood must be 'four' or 'eight'");
                } else {
                    throw ConfigError("unknown config key: sharpen." + k);
                }
            }
        } else if (key == "detect") {
            detail::expect_object(value, key);
            for (const auto& [k, v] : value.items()) {
                if (k == "t_seed") cfg.detect.t_seed = config_get<double>(v, "detect.t_seed");
                else if (k == "r_min") cfg.detect.r_min = config_get<int>(v, "detect.r_min");
                else if (k == "t_grow") cfg.detect.t_grow = config_get<double>(v, "detect.t_grow");
                else if (k == "t_grow_relaxed")
                    cfg.detect.t_grow_relaxed = config_get<double>(v, "detect.t_grow_relaxed");
                else if (k == "a_cap") cfg.detect.a_cap = config_get<int>(v, "detect.a_cap");
                else if (k == "a_min") cfg.detect.a_min = config_get<int>(v, "detect.a_min");
                else if (k == "a_max") cfg.detect.a_max = config_get<int>(v, "detect.a_max");
                else if (k == "c_min") cfg.detect.c_min = config_get<double>(v, "detect.c_min");
                else if (k == "c_min_relaxed")
                    cfg.detect.c_min_relaxed = config_get<double>(v, "detect.c_min_relaxed");
                else if (k == "aspect_max")
                    cfg.detect.aspect_max = config_get<double>(v, "detect.aspect_max");
                else if (k == "contrast_min")
                    cfg.detect.contrast_min = config_get<double>(v, "detect.contrast_min");
                else if (k == "ring_width")
                    cfg.detect.ring_width = config_get<int>(v, "detect.ring_width");
                else if (k == "merge_dist")
                    cfg.detect.merge_dist = config_get<double>(v, "detect.merge_dist");
                else if (k == "merge_overlap")
                    cfg.detect.merge_overlap = config_get<double>(v, "detect.merge_overlap");
                else
                    throw ConfigError("unknown config key: detect." + k);
            }
        } else if (key == "persist") {
            detail::expect_object(value, key);
            for (const auto& [k, v] : value.items()) {
                if (k == "d_max") cfg.persist.d_max = config_get<double>(v, "persist.d_max");
                else if (k == "require_overlap")
                    cfg.persist.require_overlap = config_get<bool>(v, "persist.require_overlap");
                else
                    throw ConfigError("unknown config key: persist." + k);
            }
        } else if (key == "eval") {
            detail::expect_object(value, key);
            for (const auto& [k, v] : value.items()) {
                if (k == "tau_iou") {
                    cfg.eval.tau_iou = config_get<double>(v, "eval.tau_iou");
                } else if (k == "d_match") {
                    cfg.eval.d_match = config_get<double>(v, "eval.d_match");
                } else if (k == "mode") {
                    std::string mode = config_get<std::string>(v, "eval.mode");
                    if (mode == "iou") cfg.eval.mode = EvalParams::Mode::iou;
                    else if (mode == "centroid") cfg.eval.mode = EvalParams::Mode::centroid;
                    else if (mode == "either") cfg.eval.mode = EvalParams::Mode::either;
                    else throw ConfigError("eval.mode must be 'iou', 'centroid', or 'either'");
                } else {
                    throw ConfigError("unknown config key: eval." + k);
                }
            }
        } else if (key == "phantom") {
            detail::expect_object(value, key);
            for (const auto& [k, v] : value.items()) {
                PhantomConfig& p = cfg.phantom;
                if (k == "width") p.width = config_get<int>(v, "phantom.width");
                else if (k == "height") p.height = config_get<int>(v, "phantom.height");
                else if (k == "depth") p.depth = config_get<int>(v, "phantom.depth");
                else if (k == "background_mean")
                    p.background_mean = config_get<double>(v, "phantom.background_mean");
                else if (k == "background_noise_sigma")
                    p.background_noise_sigma =
                        config_get<double>(v, "phantom.background_noise_sigma");
                else if (k == "noise_smooth_sigma")
                    p.noise_smooth_sigma = config_get<double>(v, "phantom.noise_smooth_sigma");
                else if (k == "membrane_count")
                    p.membrane_count = config_get<int>(v, "phantom.membrane_count");
                else if (k == "membrane_intensity")
                    p.membrane_intensity = config_get<double>(v, "phantom.membrane_intensity");
                else if (k == "membrane_width_min")
                    p.membrane_width_min = config_get<int>(v, "phantom.membrane_width_min");
                else if (k == "membrane_width_max")
                    p.membrane_width_max = config_get<int>(v, "phantom.membrane_width_max");
                else if (k == "blob_count")
                    p.blob_count = config_get<int>(v, "phantom.blob_count");
                else if (k == "blob_radius_min")
                    p.blob_radius_min = config_get<double>(v, "phantom.blob_radius_min");
                else if (k == "blob_radius_max")
                    p.blob_radius_max = config_get<double>(v, "phantom.blob_radius_max");
                else if (k == "blob_intensity")
                    p.blob_intensity = config_get<double>(v, "phantom.blob_intensity");
                else if (k == "ar_track_count")
                    p.ar_track_count = config_get<int>(v, "phantom.ar_track_count");
                else if (k == "ar_radius_min")
                    p.ar_radius_min = config_get<double>(v, "phantom.ar_radius_min");
                else if (k == "ar_radius_max")
                    p.ar_radius_max = config_get<double>(v, "phantom.ar_radius_max");
                else if (k == "ar_intensity")
                    p.ar_intensity = config_get<double>(v, "phantom.ar_intensity");
                else if (k == "ar_span_min")
                    p.ar_span_min = config_get<int>(v, "phantom.ar_span_min");
                else if (k == "ar_span_max")
                    p.ar_span_max = config_get<int>(v, "phantom.ar_span_max");
                else if (k == "ar_jitter_max")
                    p.ar_jitter_max = config_get<double>(v, "phantom.ar_jitter_max");
                else if (k == "distractor_count")
                    p.distractor_count = config_get<int>(v, "phantom.distractor_count");
                else if (k == "borderline_count")
                    p.borderline_count = config_get<int>(v, "phantom.borderline_count");
                else if (k == "borderline_intensity")
                    p.borderline_intensity = config_get<double>(v, "phantom.borderline_intensity");
                else if (k == "rng_seed")
                    p.rng_seed = config_get<std::uint64_t>(v, "phantom.rng_seed");
                else
                    throw ConfigError("unknown config key: phantom." + k);
            }
        } else {
            throw ConfigError("unknown config key: " + key);
        }
    }
    try {
        cfg.correction.validate();
        cfg.bilateral.validate();
        cfg.sharpen.validate();
        cfg.detect.validate();
        cfg.persist.validate();
        cfg.eval.validate();
        cfg.phantom.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    }
    return cfg;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return parse_pipeline_config(j);
}

// Reports echo the resolved parameters. Paths and worker counts are left out
// on purpose: outputs must be byte-identical across machines and schedules.
inline nlohmann::ordered_json config_to_json(const PipelineConfig& cfg) {
    nlohmann::ordered_json j;
    j["correction"] = {{"alpha", cfg.correction.alpha},
                       {"tol", cfg.correction.tol},
                       {"max_iter", cfg.correction.max_iter}};
    j["bilateral"] = {{"sigma_s", cfg.bilateral.sigma_s},
                      {"sigma_r", cfg.bilateral.sigma_r},
                      {"radius", cfg.bilateral.radius}};
    j["sharpen"] = {{"lambda", cfg.sharpen.lambda},
                    {"neighborhood", cfg.sharpen.neighborhood ==
                                             SharpenParams::Neighborhood::eight
                                         ? "eight"
                                         : "four"}};
    j["detect"] = {{"t_seed", cfg.detect.t_seed},
                   {"r_min", cfg.detect.r_min},
                   {"t_grow", cfg.detect.t_grow},
                   {"t_grow_relaxed", cfg.detect.t_grow_relaxed},
                   {"a_cap", cfg.detect.a_cap},
                   {"a_min", cfg.detect.a_min},
                   {"a_max", cfg.detect.a_max},
                   {"c_min", cfg.detect.c_min},
                   {"c_min_relaxed", cfg.detect.c_min_relaxed},
                   {"aspect_max", cfg.detect.aspect_max},
                   {"contrast_min", cfg.detect.contrast_min},
                   {"ring_width", cfg.detect.ring_width},
                   {"merge_dist", cfg.detect.merge_dist},
                   {"merge_overlap", cfg.detect.merge_overlap}};
    j["persist"] = {{"d_max", cfg.persist.d_max},
                    {"require_overlap", cfg.persist.require_overlap}};
    j["eval"] = {{"tau_iou", cfg.eval.tau_iou},
                 {"d_match", cfg.eval.d_match},
                 {"mode", to_string(cfg.eval.mode)}};
    j["skip_correct"] = cfg.skip_correct;
    j["skip_overlay"] = cfg.skip_overlay;
    return j;
}

}  // namespace arpipe
