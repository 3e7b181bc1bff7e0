#pragma once

// Annotation persistence: per-slice 16-bit label PNGs plus annotations.json
// with the exact region set (RLE runs, track ids, origins, statistics).
// Saving then reloading reproduces the identical AnnotationSet, and a second
// save is byte-identical to the first.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "arpipe/errors.hpp"
#include "arpipe/stack_io.hpp"
#include "arpipe/volume.hpp"

namespace arpipe {

// Label id per region on one slice: the track id when present, otherwise the
// smallest positive id not used by a tracked region on the same slice.
inline std::vector<int> region_label_ids(const std::vector<Region>& regions) {
    std::set<int> used;
    for (const Region& r : regions)
        if (r.track_id) used.insert(*r.track_id);
    std::vector<int> ids;
    ids.reserve(regions.size());
    int ephemeral = 1;
    for (const Region& r : regions) {
        if (r.track_id) {
            ids.push_back(*r.track_id);
        } else {
            while (used.count(ephemeral)) ++ephemeral;
            ids.push_back(ephemeral);
            used.insert(ephemeral);
        }
    }
    return ids;
}

inline LabelVolume render_label_volume(const AnnotationSet& set) {
    LabelVolume vol(set.width, set.height, set.depth());
    for (int z = 0; z < set.depth(); ++z) {
        std::vector<int> ids = region_label_ids(set.by_z[z]);
        for (std::size_t i = 0; i < set.by_z[z].size(); ++i) {
            int id = ids[i];
            if (id > 65535)
                throw ValidationError("label id " + std::to_string(id) +
                                      " exceeds the 16-bit label map range");
            set.by_z[z][i].mask.for_each_pixel([&](int x, int y) {
                vol.at(x, y, z) = static_cast<std::uint16_t>(id);
            });
        }
    }
    return vol;
}

namespace detail {

inline nlohmann::ordered_json stats_to_json(const RegionStats& st) {
    nlohmann::ordered_json j;
    j["area_px"] = st.area_px;
    j["centroid"] = {st.centroid_x, st.centroid_y};
    j["bbox"] = {st.bbox.x0, st.bbox.y0, st.bbox.x1, st.bbox.y1};
    j["perimeter_units"] = st.perimeter_units;
    j["circularity"] = st.circularity;
    j["aspect"] = st.aspect;
    j["mean_intensity"] = st.mean_intensity;
    j["ring_intensity"] = st.ring_intensity;
    return j;
}

}  // namespace detail

inline void save_annotations(const AnnotationSet& set, const Stack& stack,
                             const std::filesystem::path& dir, int ring_width = 3) {
    set.validate();
    if (set.width != stack.width() || set.height != stack.height() ||
        set.depth() != stack.depth())
        throw ValidationError("annotation set does not match stack dimensions");

    LabelVolume labels = render_label_volume(set);

    nlohmann::ordered_json root;
    root["width"] = set.width;
    root["height"] = set.height;
    root["depth"] = set.depth();
    root["next_track_id"] = set.next_track_id;
    nlohmann::ordered_json regions = nlohmann::ordered_json::array();
    for (int z = 0; z < set.depth(); ++z) {
        for (const Region& r : set.by_z[z]) {
            nlohmann::ordered_json jr;
            jr["z"] = r.z;
            if (r.track_id)
                jr["track_id"] = *r.track_id;
            else
                jr["track_id"] = nullptr;
            jr["origin"] = to_string(r.origin);
            nlohmann::ordered_json runs = nlohmann::ordered_json::array();
            for (const PixelRun& run : r.mask.runs()) runs.push_back({run.y, run.x0, run.x1});
            jr["runs"] = runs;
            jr["stats"] = detail::stats_to_json(region_stats(r, stack.slices[z], ring_width));
            regions.push_back(std::move(jr));
        }
    }
    root["regions"] = std::move(regions);

    std::filesystem::create_directories(dir);
    save_label_volume(labels, dir);
    std::ofstream out(dir / "annotations.json");
    if (!out) throw IoError("cannot write " + (dir / "annotations.json").string());
    out << root.dump(2) << "\n";
}

// Accepts either the annotations.json file or the directory containing it.
inline AnnotationSet load_annotations(const std::filesystem::path& path) {
    std::filesystem::path file = path;
    if (std::filesystem::is_directory(file)) file /= "annotations.json";
    nlohmann::json j = detail::parse_json_file(file);
    try {
        AnnotationSet set(j.at("width").get<int>(), j.at("height").get<int>(),
                          j.at("depth").get<int>());
        set.next_track_id = j.at("next_track_id").get<int>();
        for (const auto& jr : j.at("regions")) {
            Region r;
            r.z = jr.at("z").get<int>();
            if (r.z < 0 || r.z >= set.depth())
                throw ValidationError("region z out of range in " + file.string());
            if (!jr.at("track_id").is_null()) r.track_id = jr.at("track_id").get<int>();
            std::string origin = jr.at("origin").get<std::string>();
            if (origin == "detected")
                r.origin = RegionOrigin::detected;
            else if (origin == "recovered")
                r.origin = RegionOrigin::recovered;
            else
                throw ValidationError("unknown region origin '" + origin + "' in " +
                                      file.string());
            std::vector<PixelRun> runs;
            for (const auto& jrun : jr.at("runs"))
                runs.push_back({jrun.at(0).get<int>(), jrun.at(1).get<int>(),
                                jrun.at(2).get<int>()});
            r.mask = RleMask::from_runs(std::move(runs));
            set.by_z[r.z].push_back(std::move(r));
        }
        set.validate();
        return set;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed annotations in " + file.string() + ": " + e.what());
    }
}

}  // namespace arpipe
