#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>

#include "arpipe/phantom.hpp"
#include "arpipe/phantom_io.hpp"

using namespace arpipe;

namespace {

const PhantomOutput& default_phantom() {
    static PhantomOutput out = generate_phantom(PhantomConfig{});
    return out;
}

}  // namespace

TEST_CASE("identical seeds produce bit-identical phantoms", "[phantom][slow]") {
    PhantomConfig cfg;
    cfg.width = 128;
    cfg.height = 128;
    cfg.depth = 6;
    cfg.ar_track_count = 10;
    cfg.ar_span_max = 6;
    cfg.membrane_count = 4;
    cfg.blob_radius_min = 10.0;
    cfg.blob_radius_max = 14.0;
    cfg.rng_seed = 1234;
    PhantomOutput a = generate_phantom(cfg);
    PhantomOutput b = generate_phantom(cfg);
    REQUIRE(a.stack.depth() == b.stack.depth());
    for (int z = 0; z < a.stack.depth(); ++z) {
        REQUIRE(a.stack.slices[z].intensities == b.stack.slices[z].intensities);
        REQUIRE(a.truth.slices[z] == b.truth.slices[z]);
    }
    REQUIRE(manifest_to_json(a.manifest) == manifest_to_json(b.manifest));

    cfg.rng_seed = 1235;
    PhantomOutput c = generate_phantom(cfg);
    CHECK(a.stack.slices[0].intensities != c.stack.slices[0].intensities);
}

TEST_CASE("all-zero entity counts leave a textured background", "[phantom]") {
    PhantomConfig cfg;
    cfg.width = 64;
    cfg.height = 64;
    cfg.depth = 3;
    cfg.membrane_count = 0;
    cfg.blob_count = 0;
    cfg.ar_track_count = 0;
    cfg.distractor_count = 0;
    cfg.borderline_count = 0;
    PhantomOutput out = generate_phantom(cfg);
    for (int z = 0; z < 3; ++z) {
        for (std::uint16_t v : out.truth.slices[z]) REQUIRE(v == 0);
        for (double v : out.stack.slices[z].intensities) {
            REQUIRE(v >= 0.4);
            REQUIRE(v <= 0.8);
        }
    }
    CHECK(out.manifest.spurious_labels.empty());
}

TEST_CASE("manifest self-audit: labels match entity geometry", "[phantom][slow]") {
    const PhantomOutput& out = default_phantom();
    const PhantomManifest& m = out.manifest;
    const PhantomConfig cfg;

    // collect every labeled disk
    std::map<int, std::vector<PhantomDisk>> disks_by_label;
    for (const PhantomTrack& t : m.tracks)
        for (const PhantomDisk& d : t.instances) disks_by_label[t.label].push_back(d);
    for (const PhantomDistractor& d : m.distractors)
        disks_by_label[d.label].push_back(d.disk);

    // every nonzero label pixel belongs to its entity's disk, and vice versa
    for (int z = 0; z < m.depth; ++z) {
        for (int y = 0; y < m.height; ++y) {
            for (int x = 0; x < m.width; ++x) {
                int label = out.truth.at(x, y, z);
                if (label == 0) continue;
                REQUIRE(disks_by_label.count(label));
                bool inside = false;
                for (const PhantomDisk& d : disks_by_label[label])
                    if (d.z == z && (x - d.cx) * (x - d.cx) + (y - d.cy) * (y - d.cy) <=
                                        d.r * d.r)
                        inside = true;
                REQUIRE(inside);
            }
        }
    }
    for (const auto& [label, disks] : disks_by_label)
        for (const PhantomDisk& d : disks)
            detail::for_each_disk_pixel(d, m.width, m.height, [&](int x, int y) {
                REQUIRE(out.truth.at(x, y, d.z) == label);
            });

    // AR tracks: consecutive slices, span >= 2, jitter-bounded centroid steps
    for (const PhantomTrack& t : m.tracks) {
        REQUIRE(t.instances.size() >= 2);
        for (std::size_t i = 1; i < t.instances.size(); ++i) {
            CHECK(t.instances[i].z == t.instances[i - 1].z + 1);
            CHECK(std::abs(t.instances[i].cx - t.instances[i - 1].cx) <=
                  cfg.ar_jitter_max + 1e-9);
            CHECK(std::abs(t.instances[i].cy - t.instances[i - 1].cy) <=
                  cfg.ar_jitter_max + 1e-9);
        }
    }

    // distractors: exactly one slice each, all flagged spurious
    CHECK(m.distractors.size() == static_cast<std::size_t>(cfg.distractor_count));
    std::set<int> spurious(m.spurious_labels.begin(), m.spurious_labels.end());
    for (const PhantomDistractor& d : m.distractors) REQUIRE(spurious.count(d.label));
    CHECK(spurious.size() == m.distractors.size());
}

TEST_CASE("rendered AR disks have the configured intensity and contrast", "[phantom][slow]") {
    const PhantomOutput& out = default_phantom();
    const PhantomConfig cfg;
    double contrast_sum = 0.0;
    int disk_count = 0;
    for (const PhantomTrack& t : out.manifest.tracks) {
        for (const PhantomDisk& d : t.instances) {
            if (d.borderline) continue;
            const Slice& slice = out.stack.slices[d.z];
            double disk_sum = 0.0;
            int n = 0;
            detail::for_each_disk_pixel(d, cfg.width, cfg.height, [&](int x, int y) {
                disk_sum += slice.at(x, y);
                ++n;
            });
            double disk_mean = disk_sum / n;
            CHECK(std::abs(disk_mean - cfg.ar_intensity) <= cfg.background_noise_sigma);

            // ring: pixels within 3 px Chebyshev of the disk, outside it
            PhantomDisk wide = d;
            wide.r = d.r + 3.0 * 1.5;
            double ring_sum = 0.0;
            int rn = 0;
            detail::for_each_disk_pixel(wide, cfg.width, cfg.height, [&](int x, int y) {
                if ((x - d.cx) * (x - d.cx) + (y - d.cy) * (y - d.cy) > d.r * d.r) {
                    ring_sum += slice.at(x, y);
                    ++rn;
                }
            });
            double ring_mean = ring_sum / rn;
            contrast_sum += ring_mean - disk_mean;
            ++disk_count;
        }
    }
    REQUIRE(disk_count > 0);
    // brighter ring in expectation, with a wide margin over the color prior
    CHECK(contrast_sum / disk_count >= 0.05);
}

TEST_CASE("borderline instances are strict misses and relaxed hits", "[phantom][slow]") {
    const PhantomOutput& out = default_phantom();
    const PhantomConfig cfg;
    int borderline_seen = 0;
    for (const PhantomTrack& t : out.manifest.tracks) {
        for (const PhantomDisk& d : t.instances) {
            if (!d.borderline) continue;
            ++borderline_seen;
            const Slice& slice = out.stack.slices[d.z];
            double lowest = 1.0;
            detail::for_each_disk_pixel(d, cfg.width, cfg.height, [&](int x, int y) {
                lowest = std::min(lowest, slice.at(x, y));
            });
            // above the strict seed threshold, reachable by relaxed growth
            CHECK(lowest > 0.25);
            CHECK(lowest <= cfg.borderline_intensity);
        }
    }
    CHECK(borderline_seen == cfg.borderline_count);
}

TEST_CASE("impossible placements raise a generation error naming the entity", "[phantom]") {
    PhantomConfig cfg;
    cfg.width = 64;
    cfg.height = 64;
    cfg.depth = 4;
    cfg.ar_span_max = 4;
    cfg.ar_track_count = 200;  // cannot pack 200 separated tracks into 64x64
    cfg.distractor_count = 0;
    cfg.borderline_count = 0;
    cfg.blob_count = 0;
    cfg.membrane_count = 0;
    CHECK_THROWS_WITH(generate_phantom(cfg), Catch::Matchers::ContainsSubstring("ar track"));
}

TEST_CASE("phantom config validation", "[phantom]") {
    PhantomConfig cfg;
    cfg.ar_span_min = 1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = PhantomConfig{};
    cfg.ar_span_min = 20;  // deeper than the stack
    cfg.ar_span_max = 20;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = PhantomConfig{};
    cfg.borderline_count = 31;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
