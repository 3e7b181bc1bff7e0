// arpipe: annotate axoplasmic reticula in EM slice stacks.
//
// Subcommands mirror the pipeline stages (phantom, correct, filter, detect,
// check, eval, overlay) plus an end-to-end runner (pipeline). Exit codes:
// 0 success, 1 usage/config error, 2 I/O error, 3 validation error.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "arpipe/config.hpp"
#include "arpipe/pipeline.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::string input;
    std::string output;
    std::string truth;
    std::string annotations;
    std::string stack;
    int workers = -1;  // -1 = not set on the command line
    std::optional<std::uint64_t> seed;
    bool skip_correct = false;
    bool skip_overlay = false;
};

arpipe::PipelineConfig resolve_config(const CliOptions& opts) {
    arpipe::PipelineConfig cfg;
    if (!opts.config_path.empty()) cfg = arpipe::load_pipeline_config(opts.config_path);
    if (!opts.input.empty()) cfg.input = opts.input;
    if (!opts.output.empty()) cfg.output = opts.output;
    if (!opts.truth.empty()) cfg.truth = opts.truth;
    if (opts.workers >= 0) cfg.workers = opts.workers;
    if (opts.seed) cfg.phantom.rng_seed = *opts.seed;
    if (opts.skip_correct) cfg.skip_correct = true;
    if (opts.skip_overlay) cfg.skip_overlay = true;
    return cfg;
}

void require(const std::string& value, const char* flag) {
    if (value.empty())
        throw arpipe::ConfigError(std::string("missing required option ") + flag);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"axoplasmic reticulum annotation pipeline for EM slice stacks"};
    app.set_version_flag("--version", std::string("arpipe 0.1.0"));
    app.require_subcommand(1);

    CliOptions opts;
    std::string run;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "JSON config file");
        cmd->add_option("--workers", opts.workers, "worker threads (0 = auto)");
        cmd->callback([&run, cmd] { run = cmd->get_name(); });
        return cmd;
    };

    CLI::App* phantom = add_common(app.add_subcommand("phantom", "generate a synthetic stack"));
    phantom->add_option("--output", opts.output, "output directory")->required();
    phantom->add_option("--seed", [&opts](const std::vector<std::string>& v) {
        opts.seed = std::stoull(v.front());
        return true;
    }, "phantom RNG seed");

    CLI::App* correct = add_common(app.add_subcommand("correct", "gradient-domain contrast correction"));
    correct->add_option("--input", opts.input, "input stack directory")->required();
    correct->add_option("--output", opts.output, "output directory")->required();

    CLI::App* filter = add_common(app.add_subcommand("filter", "bilateral + sharpened stacks"));
    filter->add_option("--input", opts.input, "input stack directory")->required();
    filter->add_option("--output", opts.output, "output directory")->required();

    CLI::App* detect = add_common(app.add_subcommand("detect", "region-growing detection"));
    detect->add_option("--input", opts.input, "filter-stage output directory")->required();
    detect->add_option("--output", opts.output, "output directory")->required();

    CLI::App* check = add_common(app.add_subcommand("check", "cross-slice persistence check"));
    check->add_option("--input", opts.input, "detect-stage output directory")->required();
    check->add_option("--stack", opts.stack, "bilateral stack directory")->required();
    check->add_option("--output", opts.output, "output directory")->required();

    CLI::App* eval = add_common(app.add_subcommand("eval", "precision/recall against truth labels"));
    eval->add_option("--input", opts.input, "annotations directory")->required();
    eval->add_option("--truth", opts.truth, "truth label directory")->required();
    eval->add_option("--output", opts.output, "report output directory")->required();

    CLI::App* overlay = add_common(app.add_subcommand("overlay", "burn annotations into PNGs"));
    overlay->add_option("--input", opts.input, "input stack directory")->required();
    overlay->add_option("--annotations", opts.annotations, "annotations directory")->required();
    overlay->add_option("--output", opts.output, "output directory")->required();

    CLI::App* pipeline = add_common(app.add_subcommand("pipeline", "run all stages"));
    pipeline->add_option("--input", opts.input, "input stack directory");
    pipeline->add_option("--output", opts.output, "output directory");
    pipeline->add_option("--truth", opts.truth, "truth label directory (enables eval)");
    pipeline->add_flag("--skip-correct", opts.skip_correct,
                       "treat the input as already corrected");
    pipeline->add_flag("--skip-overlay", opts.skip_overlay, "skip overlay rendering");

    CLI11_PARSE(app, argc, argv);

    try {
        arpipe::PipelineConfig cfg = resolve_config(opts);
        namespace stage = arpipe::stage;
        if (run == "phantom") {
            stage::phantom(cfg.output, cfg.phantom);
        } else if (run == "correct") {
            stage::correct(cfg.input, cfg.output, cfg.correction, cfg.workers);
        } else if (run == "filter") {
            stage::filter(cfg.input, cfg.output, cfg.bilateral, cfg.sharpen, cfg.workers);
        } else if (run == "detect") {
            stage::detect(cfg.input, cfg.output, cfg.detect, cfg.workers);
        } else if (run == "check") {
            stage::check(cfg.input, opts.stack, cfg.output, cfg.detect, cfg.persist,
                         cfg.workers);
        } else if (run == "eval") {
            arpipe::EvalReport report =
                stage::eval(cfg.input, cfg.truth,
                            std::filesystem::path(cfg.output) / "eval_report.json", cfg.eval,
                            cfg.workers);
            std::cout << "precision " << report.precision << "  recall " << report.recall
                      << "  (tp " << report.tp << " fp " << report.fp << " fn " << report.fn
                      << ")\n";
        } else if (run == "overlay") {
            stage::overlay(cfg.input, opts.annotations, cfg.output, cfg.workers);
        } else if (run == "pipeline") {
            require(cfg.input, "--input");
            require(cfg.output, "--output");
            arpipe::PipelineResult result = arpipe::run_pipeline(cfg);
            std::cout << "detected " << result.detect_log.total_regions << " regions; kept "
                      << result.persist.kept << ", removed " << result.persist.removed
                      << ", recovered " << result.persist.recovered << ", tracks "
                      << result.persist.tracks << "\n";
            if (result.evaluated)
                std::cout << "precision " << result.eval.precision << "  recall "
                          << result.eval.recall << "\n";
        }
        return 0;
    } catch (const arpipe::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const arpipe::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 2;
    } catch (const arpipe::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
