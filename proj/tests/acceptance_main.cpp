// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Tolerances and thresholds are pinned in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "arpipe/annotations_io.hpp"
#include "arpipe/config.hpp"
#include "arpipe/detect.hpp"
#include "arpipe/evaluate.hpp"
#include "arpipe/filters.hpp"
#include "arpipe/gradient_correct.hpp"
#include "arpipe/persistence.hpp"
#include "arpipe/phantom.hpp"
#include "arpipe/phantom_io.hpp"
#include "arpipe/pipeline.hpp"
#include "arpipe/rng.hpp"
#include "support/dense_poisson.hpp"
#include "support/eval_scenes.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace arpipe;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, bool ok, const std::string& label, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", id, label.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double max_abs_diff(const Slice& a, const Slice& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.intensities.size(); ++i)
        m = std::max(m, std::abs(a.intensities[i] - b.intensities[i]));
    return m;
}

bool monotone(const std::vector<double>& h) {
    for (std::size_t i = 1; i < h.size(); ++i)
        if (h[i] > h[i - 1] * (1.0 + 1e-12)) return false;
    return true;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return "<missing:" + p.string() + ">";
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// ---------------------------------------------------------------------------

void criterion_1_bilateral_oracle() {
    auto start = std::chrono::steady_clock::now();
    Rng rng(101);
    BilateralParams params;
    params.sigma_s = 2.0;
    params.sigma_r = 0.1;
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        Slice s = oracle::random_slice(rng, 64, 64);
        Slice got = bilateral(s, params);
        Slice want = oracle::naive_bilateral(s, 2.0, 0.1, params.effective_radius());
        worst = std::max(worst, max_abs_diff(got, want));
    }
    double elapsed = seconds_since(start);
    report(1, worst <= 1e-6 && elapsed < 5.0, "bilateral oracle equivalence",
           "max diff " + std::to_string(worst) + ", " + std::to_string(elapsed) + " s");
}

void criterion_2_bilateral_limits() {
    Slice constant = make_slice(0, 48, 48, 0.42);
    bool identity = bilateral(constant, BilateralParams{}).intensities == constant.intensities;

    Rng rng(102);
    Slice s = oracle::random_slice(rng, 64, 64);
    BilateralParams wide;
    wide.sigma_s = 2.0;
    wide.sigma_r = 10.0;
    double diff = max_abs_diff(bilateral(s, wide),
                               oracle::gaussian_reference(s, 2.0, wide.effective_radius()));
    report(2, identity && diff <= 1e-2, "bilateral degenerate limits",
           std::string("constant identity ") + (identity ? "exact" : "BROKEN") +
               ", gaussian diff " + std::to_string(diff));
}

void criterion_3_sharpen() {
    Rng rng(103);
    Slice s = oracle::random_slice(rng, 64, 64);
    SharpenParams zero;
    zero.lambda = 0.0;
    bool identity = laplacian_sharpen(s, zero).intensities == s.intensities;

    SharpenParams sp;
    sp.lambda = 1.0;
    double diff = max_abs_diff(laplacian_sharpen(s, sp), oracle::naive_sharpen(s, 1.0, true));

    Slice step = make_slice(0, 32, 8, 0.3);
    for (int y = 0; y < 8; ++y)
        for (int x = 16; x < 32; ++x) step.at(x, y) = 0.7;
    Slice sharpened = laplacian_sharpen(step, sp);
    double before = step.at(16, 4) - step.at(15, 4);
    double after = sharpened.at(16, 4) - sharpened.at(15, 4);
    bool contrast_up = after > before && sharpened.at(15, 4) > 0.0 && sharpened.at(16, 4) < 1.0;

    report(3, identity && diff <= 1e-9 && contrast_up, "laplacian sharpen",
           "ref diff " + std::to_string(diff) + ", edge contrast " + std::to_string(before) +
               " -> " + std::to_string(after));
}

void criterion_4_solver() {
    auto start = std::chrono::steady_clock::now();
    Rng rng(104);

    // (i) consistent system, solved from a zero initial guess
    Slice u_star = oracle::random_slice(rng, 32, 32);
    Stack holder;
    holder.slices.push_back(u_star);
    CorrectionSystem consistent = build_correction_system(holder, 0);
    CorrectionParams tight;
    tight.tol = 1e-10;
    std::vector<double> zeros(consistent.v.size(), 0.0);
    SolveResult exact = screened_poisson_solve(consistent, tight, &zeros);
    double rms = 0.0;
    for (std::size_t i = 0; i < exact.u.size(); ++i) {
        double d = exact.u[i] - u_star.intensities[i];
        rms += d * d;
    }
    rms = std::sqrt(rms / static_cast<double>(exact.u.size()));

    // (ii) random system vs the dense direct-solve oracle
    CorrectionSystem random_sys;
    random_sys.width = 32;
    random_sys.height = 32;
    random_sys.gx.resize(31 * 32);
    random_sys.gy.resize(32 * 31);
    random_sys.v.resize(32 * 32);
    for (double& v : random_sys.gx) v = rng.uniform(-1.0, 1.0);
    for (double& v : random_sys.gy) v = rng.uniform(-1.0, 1.0);
    for (double& v : random_sys.v) v = rng.uniform(-1.0, 1.0);
    CorrectionParams params;
    params.alpha = 0.05;
    params.tol = 1e-10;
    SolveResult solved = screened_poisson_solve(random_sys, params);
    std::vector<double> dense = oracle::dense_poisson_solve(random_sys, 0.05);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < dense.size(); ++i)
        max_diff = std::max(max_diff, std::abs(solved.u[i] - dense[i]));

    // (iii) monotone residuals on both solves
    bool mono = monotone(exact.residual_history) && monotone(solved.residual_history);
    double elapsed = seconds_since(start);
    report(4, rms <= 1e-6 && max_diff <= 1e-6 && mono && elapsed < 2.0,
           "screened-poisson solver",
           "consistent rms " + std::to_string(rms) + ", dense diff " + std::to_string(max_diff) +
               ", monotone " + (mono ? "yes" : "NO") + ", " + std::to_string(elapsed) + " s");
}

void criterion_5_correction_behavior() {
    PhantomOutput phantom = generate_phantom(PhantomConfig{});
    Stack stack = phantom.stack;
    for (double& v : stack.slices[3].intensities) v = std::min(1.0, v + 0.15);
    double global_mean = stack.mean_intensity();

    Stack corrected = correct_stack(stack, CorrectionParams{}, 0);
    double worst_mean = 0.0;
    double worst_grad_rms = 0.0;
    for (int z = 0; z < stack.depth(); ++z) {
        worst_mean = std::max(worst_mean, std::abs(corrected.slices[z].mean() - global_mean));
        const Slice& a = corrected.slices[z];
        const Slice& b = stack.slices[z];
        double sum = 0.0;
        std::size_t count = 0;
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x + 1 < a.width; ++x) {
                double d = (a.at(x + 1, y) - a.at(x, y)) - (b.at(x + 1, y) - b.at(x, y));
                sum += d * d;
                ++count;
            }
        for (int y = 0; y + 1 < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                double d = (a.at(x, y + 1) - a.at(x, y)) - (b.at(x, y + 1) - b.at(x, y));
                sum += d * d;
                ++count;
            }
        worst_grad_rms = std::max(worst_grad_rms, std::sqrt(sum / count));
    }
    report(5, worst_mean <= 1e-3 && worst_grad_rms <= 1e-3, "offset-injection correction",
           "worst mean offset " + std::to_string(worst_mean) + ", worst gradient rms " +
               std::to_string(worst_grad_rms));
}

void criterion_6_detector_geometry() {
    // single rasterized disk
    Slice disk_slice = make_slice(0, 64, 64, 0.6);
    for (auto& [x, y] : oracle::lattice_disk(30, 30, 5)) disk_slice.at(x, y) = 0.15;
    Stack stack;
    stack.slices.push_back(disk_slice);
    AnnotationSet set = detect_stack(stack, stack, DetectParams{}, 1);
    bool one = set.region_count() == 1;
    bool area_ok = false, centroid_ok = false;
    if (one) {
        const Region& r = set.by_z[0][0];
        area_ok = std::abs(r.mask.area() - 81) <= 8;
        auto [cx, cy] = r.mask.centroid();
        centroid_ok = std::hypot(cx - 30.5, cy - 30.5) <= 1.0;
    }

    // 1x60 dark line fails on circularity
    Slice line_slice = make_slice(0, 80, 9, 0.6);
    std::vector<std::pair<int, int>> line_px;
    for (int x = 8; x < 68; ++x) {
        line_slice.at(x, 4) = 0.15;
        line_px.emplace_back(x, 4);
    }
    Region line;
    line.z = 0;
    line.mask = RleMask::from_pixels(std::move(line_px));
    AcceptDecision line_decision = accept_region(line, line_slice, DetectParams{}, GrowMode::strict);
    bool line_ok =
        !line_decision.accepted && line_decision.reason == RejectReason::shape_circularity;

    // 100x100 dark rectangle aborts as oversize
    Slice rect_slice = make_slice(0, 120, 120, 0.6);
    for (int y = 10; y < 110; ++y)
        for (int x = 10; x < 110; ++x) rect_slice.at(x, y) = 0.15;
    GrowOutcome rect = grow_region(rect_slice, {60, 60}, DetectParams{}, GrowMode::strict);
    bool rect_ok = rect.oversize && !rect.region.has_value();

    report(6, one && area_ok && centroid_ok && line_ok && rect_ok, "detector geometry",
           std::string("disk ") + (one ? "unique" : "NOT UNIQUE") + ", line " +
               to_string(line_decision.reason) + ", rectangle " +
               (rect_ok ? "oversize" : "NOT oversize"));
}

struct PhantomRun {
    PhantomOutput phantom;
    Stack bilateral;
    AnnotationSet pre;    // detections before the persistence pass
    AnnotationSet post;   // after
    PersistReport report;
};

PhantomRun run_phantom_detection() {
    PhantomRun run;
    run.phantom = generate_phantom(PhantomConfig{});
    Stack corrected = correct_stack(run.phantom.stack, CorrectionParams{}, 0);
    run.bilateral = bilateral_stack(corrected, BilateralParams{}, 0);
    Stack sharpened = sharpen_stack(run.bilateral, SharpenParams{}, 0);
    run.pre = detect_stack(run.bilateral, sharpened, DetectParams{}, 0);
    auto [post, report] =
        persistence_filter(run.pre, run.bilateral, DetectParams{}, PersistParams{}, 0);
    run.post = std::move(post);
    run.report = report;
    return run;
}

int majority_label(const Region& r, const LabelVolume& truth) {
    std::map<int, int> votes;
    r.mask.for_each_pixel([&](int x, int y) { ++votes[truth.at(x, y, r.z)]; });
    int best = 0, best_count = -1;
    for (auto [label, count] : votes)
        if (count > best_count) {
            best = label;
            best_count = count;
        }
    return best;
}

void criterion_7_persistence(const PhantomRun& run) {
    const PhantomConfig cfg;
    auto survived = [&](const Region& r) {
        for (const Region& out : run.post.by_z[r.z])
            if (out.mask == r.mask) return true;
        return false;
    };

    int distractor_detections = 0, distractor_removed = 0;
    int true_detections = 0, true_removed = 0;
    std::map<int, std::set<int>> detected_track_slices;  // label -> slices with a detection
    run.pre.for_each_region([&](const Region& r) {
        int label = majority_label(r, run.phantom.truth);
        bool is_ar = label >= 1 && label <= cfg.ar_track_count;
        bool is_distractor =
            label > cfg.ar_track_count && label <= cfg.ar_track_count + cfg.distractor_count;
        if (is_distractor) {
            ++distractor_detections;
            if (!survived(r)) ++distractor_removed;
        } else if (is_ar) {
            ++true_detections;
            detected_track_slices[label].insert(r.z);
            if (!survived(r)) ++true_removed;
        }
    });
    double distractor_removal =
        distractor_detections > 0
            ? static_cast<double>(distractor_removed) / distractor_detections
            : 0.0;
    double true_removal =
        true_detections > 0 ? static_cast<double>(true_removed) / true_detections : 1.0;

    // borderline instances whose track has a detected neighbor-slice instance
    int borderline_eligible = 0, borderline_recovered = 0;
    for (const PhantomTrack& track : run.phantom.manifest.tracks) {
        for (const PhantomDisk& d : track.instances) {
            if (!d.borderline) continue;
            const std::set<int>& detected = detected_track_slices[track.label];
            if (!detected.count(d.z - 1) && !detected.count(d.z + 1)) continue;
            ++borderline_eligible;
            for (const Region& r : run.post.by_z[d.z]) {
                if (r.origin != RegionOrigin::recovered) continue;
                auto [cx, cy] = r.mask.centroid();
                if (std::hypot(cx - d.cx, cy - d.cy) <= d.r + 3.0) {
                    ++borderline_recovered;
                    break;
                }
            }
        }
    }

    // every kept region has a post-filter adjacency match
    bool all_matched = true;
    PersistParams pp;
    for (int z = 0; z < run.post.depth() && all_matched; ++z) {
        std::set<int> matched;
        for (const AdjacencyMatch& m : adjacency_matches(run.post, z, pp))
            matched.insert(m.index_a);
        if (matched.size() != run.post.by_z[z].size()) all_matched = false;
    }

    bool ok = distractor_detections > 0 && distractor_removal >= 0.9 && true_removal <= 0.05 &&
              borderline_eligible > 0 && borderline_recovered == borderline_eligible &&
              run.report.recovered >= borderline_recovered && all_matched;
    report(7, ok, "phantom persistence",
           "distractors removed " + std::to_string(distractor_removed) + "/" +
               std::to_string(distractor_detections) + ", true removed " +
               std::to_string(true_removed) + "/" + std::to_string(true_detections) +
               ", borderline recovered " + std::to_string(borderline_recovered) + "/" +
               std::to_string(borderline_eligible) + ", all matched " +
               (all_matched ? "yes" : "NO"));
}

void criterion_8_end_to_end(const fs::path& phantom_dir) {
    auto start = std::chrono::steady_clock::now();
    testutil::TempDir run("acceptance_e2e");
    PipelineConfig cfg;
    cfg.input = (phantom_dir / "stack").string();
    cfg.truth = (phantom_dir / "truth").string();
    cfg.output = run.path().string();
    cfg.workers = 1;
    PipelineResult result = run_pipeline(cfg);
    double elapsed = seconds_since(start);
    bool ok = result.evaluated && result.eval.precision >= 0.85 &&
              result.eval.recall >= 0.50 && elapsed < 60.0;
    report(8, ok, "end-to-end phantom gate",
           "precision " + std::to_string(result.eval.precision) + ", recall " +
               std::to_string(result.eval.recall) + ", " + std::to_string(elapsed) +
               " s single-worker");
}

void criterion_9_eval_sanity(const PhantomRun& run) {
    // truth against itself
    AnnotationSet as_regions(run.phantom.truth.width, run.phantom.truth.height,
                             run.phantom.truth.depth());
    for (int z = 0; z < run.phantom.truth.depth(); ++z)
        for (const TruthInstance& inst :
             truth_instances(run.phantom.truth.slices[z], run.phantom.truth.width,
                             run.phantom.truth.height)) {
            Region r;
            r.z = z;
            r.mask = inst.mask;
            as_regions.by_z[z].push_back(std::move(r));
        }
    EvalReport self = evaluate(as_regions, run.phantom.truth, EvalParams{}, 0);
    bool self_ok = self.precision == 1.0 && self.recall == 1.0;

    AnnotationSet empty(run.phantom.truth.width, run.phantom.truth.height,
                        run.phantom.truth.depth());
    EvalReport degenerate = evaluate(empty, run.phantom.truth, EvalParams{}, 0);
    bool degenerate_ok = degenerate.precision == 1.0 && degenerate.degenerate_precision &&
                         degenerate.recall == 0.0;

    testutil::SceneSweep sweep = testutil::sweep_enumerated_scenes();
    bool greedy_ok = sweep.scenes > 200 && sweep.mismatches == 0;

    report(9, self_ok && degenerate_ok && greedy_ok, "evaluation sanity",
           std::string("self 1/1 ") + (self_ok ? "yes" : "NO") + ", degenerate flagged " +
               (degenerate_ok ? "yes" : "NO") + ", greedy==oracle on " +
               std::to_string(sweep.scenes) + " scenes with " +
               std::to_string(sweep.mismatches) + " mismatches");
}

void criterion_10_determinism(const fs::path& phantom_dir) {
    testutil::TempDir run_a("acceptance_w1");
    testutil::TempDir run_b("acceptance_w8");
    PipelineConfig cfg;
    cfg.input = (phantom_dir / "stack").string();
    cfg.truth = (phantom_dir / "truth").string();
    cfg.workers = 1;
    cfg.skip_overlay = true;
    cfg.output = run_a.path().string();
    run_pipeline(cfg);
    cfg.workers = 8;
    cfg.output = run_b.path().string();
    run_pipeline(cfg);

    std::vector<std::string> rels = {
        "corrected/correction_report.json", "detected/annotations.json",
        "detected/detect_log.json",         "checked/annotations.json",
        "checked/persist_report.json",      "eval_report.json",
        "pipeline_report.json"};
    int depth = 0;
    while (fs::exists(run_a.path() / "checked" / label_filename(depth))) ++depth;
    for (int z = 0; z < depth; ++z) {
        rels.push_back("detected/" + label_filename(z));
        rels.push_back("checked/" + label_filename(z));
    }
    bool identical = depth > 0;
    std::string first_diff = "none";
    for (const std::string& rel : rels) {
        if (read_file(run_a.path() / rel) != read_file(run_b.path() / rel)) {
            identical = false;
            first_diff = rel;
            break;
        }
    }

    PhantomOutput a = generate_phantom(PhantomConfig{});
    PhantomOutput b = generate_phantom(PhantomConfig{});
    bool phantom_identical = true;
    for (int z = 0; z < a.stack.depth(); ++z) {
        if (a.stack.slices[z].intensities != b.stack.slices[z].intensities ||
            a.truth.slices[z] != b.truth.slices[z])
            phantom_identical = false;
    }
    report(10, identical && phantom_identical, "determinism across workers and seeds",
           "first differing file: " + first_diff + ", phantom bit-identical " +
               (phantom_identical ? "yes" : "NO"));
}

void criterion_11_round_trips() {
    Rng rng(111);
    bool rle_ok = true;
    for (int trial = 0; trial < 1000 && rle_ok; ++trial) {
        int w = 1 + static_cast<int>(rng.uniform_int(1, 48));
        int h = 1 + static_cast<int>(rng.uniform_int(1, 48));
        std::vector<std::uint8_t> bits =
            oracle::random_bitmap(rng, w, h, rng.uniform(0.05, 0.9));
        RleMask mask = RleMask::from_bitmap(bits, w, h);
        std::vector<std::uint8_t> decoded(bits.size(), 0);
        mask.for_each_pixel([&](int x, int y) {
            decoded[static_cast<std::size_t>(y) * w + x] = 1;
        });
        if (decoded != bits) rle_ok = false;
    }

    // save -> load -> save byte identity
    Stack stack;
    for (int z = 0; z < 3; ++z) {
        Slice s = oracle::random_slice(rng, 48, 40);
        s.z = z;
        stack.slices.push_back(std::move(s));
    }
    AnnotationSet set(48, 40, 3);
    for (int z = 0; z < 3; ++z)
        for (int k = 0; k < 4; ++k) {
            auto px = oracle::lattice_disk(8.0 + 10 * k + rng.uniform(0, 1),
                                           12.0 + 8 * z + rng.uniform(0, 1), 2.5);
            Region r;
            r.z = z;
            r.mask = RleMask::from_pixels({px.begin(), px.end()});
            if (k % 2 == 0) r.track_id = 1 + k + 4 * z;
            set.by_z[z].push_back(std::move(r));
        }
    set.next_track_id = 20;
    testutil::TempDir dir("acceptance_rt");
    save_annotations(set, stack, dir / "first");
    AnnotationSet loaded = load_annotations(dir / "first");
    save_annotations(loaded, stack, dir / "second");
    bool save_ok = read_file(dir / "first" / "annotations.json") ==
                   read_file(dir / "second" / "annotations.json");
    report(11, rle_ok && save_ok, "round trips",
           std::string("rle identity ") + (rle_ok ? "1000/1000" : "BROKEN") +
               ", annotations byte-identical " + (save_ok ? "yes" : "NO"));
}

}  // namespace

int main() {
    std::printf("acceptance suite: default phantom is 256x256x16, seed 42\n");
    criterion_1_bilateral_oracle();
    criterion_2_bilateral_limits();
    criterion_3_sharpen();
    criterion_4_solver();
    criterion_5_correction_behavior();
    criterion_6_detector_geometry();

    PhantomRun run = run_phantom_detection();
    testutil::TempDir phantom_dir("acceptance_phantom");
    save_phantom(run.phantom, phantom_dir.path());

    criterion_7_persistence(run);
    criterion_8_end_to_end(phantom_dir.path());
    criterion_9_eval_sanity(run);
    criterion_10_determinism(phantom_dir.path());
    criterion_11_round_trips();

    if (g_failures == 0)
        std::printf("all acceptance criteria passed\n");
    else
        std::printf("%d acceptance criteria FAILED\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
