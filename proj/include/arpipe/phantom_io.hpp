#pragma once

// Phantom output layout on disk:
//   <out>/stack/z0000.png...          8-bit slices + stack.json
//   <out>/truth/labels_z0000.png...   16-bit ground-truth label maps
//   <out>/manifest.json               every entity's geometry and category
// The manifest's spurious_labels list tells the eval harness which truth
// labels model noise rather than real AR.

#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "arpipe/errors.hpp"
#include "arpipe/phantom.hpp"
#include "arpipe/stack_io.hpp"

namespace arpipe {

inline nlohmann::ordered_json manifest_to_json(const PhantomManifest& m) {
    nlohmann::ordered_json j;
    j["width"] = m.width;
    j["height"] = m.height;
    j["depth"] = m.depth;
    auto disk_json = [](const PhantomDisk& d) {
        nlohmann::ordered_json jd;
        jd["z"] = d.z;
        jd["cx"] = d.cx;
        jd["cy"] = d.cy;
        jd["r"] = d.r;
        jd["intensity"] = d.intensity;
        jd["borderline"] = d.borderline;
        return jd;
    };
    j["ar_tracks"] = nlohmann::ordered_json::array();
    for (const PhantomTrack& t : m.tracks) {
        nlohmann::ordered_json jt;
        jt["label"] = t.label;
        jt["category"] = "ar";
        jt["instances"] = nlohmann::ordered_json::array();
        for (const PhantomDisk& d : t.instances) jt["instances"].push_back(disk_json(d));
        j["ar_tracks"].push_back(std::move(jt));
    }
    j["distractors"] = nlohmann::ordered_json::array();
    for (const PhantomDistractor& d : m.distractors) {
        nlohmann::ordered_json jd = disk_json(d.disk);
        jd["label"] = d.label;
        jd["category"] = "distractor";
        jd["spurious"] = true;
        j["distractors"].push_back(std::move(jd));
    }
    j["membranes"] = nlohmann::ordered_json::array();
    for (const PhantomMembrane& mem : m.membranes) {
        nlohmann::ordered_json jm;
        jm["category"] = "membrane";
        jm["width"] = mem.width;
        jm["points"] = nlohmann::ordered_json::array();
        for (const auto& [x, y] : mem.points) jm["points"].push_back({x, y});
        jm["slice_offsets"] = nlohmann::ordered_json::array();
        for (const auto& [x, y] : mem.slice_offsets) jm["slice_offsets"].push_back({x, y});
        j["membranes"].push_back(std::move(jm));
    }
    j["blobs"] = nlohmann::ordered_json::array();
    for (const PhantomBlob& b : m.blobs) {
        nlohmann::ordered_json jb;
        jb["category"] = "blob";
        jb["cx"] = b.cx;
        jb["cy"] = b.cy;
        jb["r"] = b.r;
        jb["slice_offsets"] = nlohmann::ordered_json::array();
        for (const auto& [x, y] : b.slice_offsets) jb["slice_offsets"].push_back({x, y});
        j["blobs"].push_back(std::move(jb));
    }
    j["spurious_labels"] = m.spurious_labels;
    return j;
}

inline void save_phantom(const PhantomOutput& out, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_stack(out.stack, dir / "stack", 8);
    save_label_volume(out.truth, dir / "truth");
    std::ofstream file(dir / "manifest.json");
    if (!file) throw IoError("cannot write " + (dir / "manifest.json").string());
    file << manifest_to_json(out.manifest).dump(2) << "\n";
}

// Looks for manifest.json in the given directory, then in its parent; returns
// the labels flagged spurious, or an empty list when no manifest exists.
inline std::vector<int> find_spurious_labels(const std::filesystem::path& truth_dir) {
    namespace fs = std::filesystem;
    for (const fs::path& candidate :
         {truth_dir / "manifest.json", truth_dir.parent_path() / "manifest.json"}) {
        if (!fs::exists(candidate)) continue;
        nlohmann::json j = detail::parse_json_file(candidate);
        if (j.contains("spurious_labels")) return j["spurious_labels"].get<std::vector<int>>();
        return {};
    }
    return {};
}

}  // namespace arpipe
