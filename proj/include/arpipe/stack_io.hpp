#pragma once

// Slice-directory I/O. A stack on disk is a directory of grayscale PNGs
// named z0000.png, z0001.png, ... with an optional stack.json manifest
// carrying the voxel dimensions. Label volumes use labels_z0000.png, ...

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "arpipe/errors.hpp"
#include "arpipe/png_io.hpp"
#include "arpipe/volume.hpp"

namespace arpipe {

namespace fs = std::filesystem;

inline std::string slice_filename(int z) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "z%04d.png", z);
    return buf;
}

inline std::string label_filename(int z) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "labels_z%04d.png", z);
    return buf;
}

namespace detail {

// Parses "<prefix><NNNN>.png" and returns NNNN, or -1 if the name does not match.
inline int parse_indexed_name(const std::string& name, const std::string& prefix) {
    const std::string suffix = ".png";
    if (name.size() != prefix.size() + 4 + suffix.size()) return -1;
    if (name.compare(0, prefix.size(), prefix) != 0) return -1;
    if (name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) return -1;
    int value = 0;
    for (std::size_t i = prefix.size(); i < prefix.size() + 4; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(name[i]))) return -1;
        value = value * 10 + (name[i] - '0');
    }
    return value;
}

// Maps z index -> path for all files matching the naming scheme, and
// validates that indices run 0..N-1 without gaps.
inline std::vector<fs::path> indexed_files(const fs::path& dir, const std::string& prefix,
                                           const std::string& what) {
    if (!fs::exists(dir) || !fs::is_directory(dir))
        throw IoError(dir.string() + " is not a readable directory");
    std::map<int, fs::path> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        int z = parse_indexed_name(entry.path().filename().string(), prefix);
        if (z >= 0) found.emplace(z, entry.path());
    }
    if (found.empty())
        throw ValidationError("no " + what + " files (" + prefix + "NNNN.png) in " + dir.string());
    std::vector<fs::path> ordered;
    int expected = 0;
    for (const auto& [z, path] : found) {
        if (z != expected) {
            char missing[24];
            std::snprintf(missing, sizeof(missing), "%s%04d.png", prefix.c_str(), expected);
            throw ValidationError("gap in " + what + " indices: missing " + missing + " in " +
                                  dir.string());
        }
        ordered.push_back(path);
        ++expected;
    }
    return ordered;
}

inline nlohmann::json parse_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("invalid JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

}  // namespace detail

inline VoxelDims load_stack_manifest(const fs::path& manifest_path) {
    nlohmann::json j = detail::parse_json_file(manifest_path);
    if (!j.is_object())
        throw ValidationError(manifest_path.string() + ": manifest must be a JSON object");
    VoxelDims dims;
    for (const auto& [key, value] : j.items()) {
        if (key == "dx_nm")
            dims.dx_nm = value.get<double>();
        else if (key == "dy_nm")
            dims.dy_nm = value.get<double>();
        else if (key == "dz_nm")
            dims.dz_nm = value.get<double>();
        else
            throw ValidationError(manifest_path.string() + ": unknown manifest key: " + key);
    }
    dims.validate();
    return dims;
}

inline Stack load_stack(const fs::path& dir) {
    std::vector<fs::path> files = detail::indexed_files(dir, "z", "slice");
    Stack stack;
    fs::path manifest = dir / "stack.json";
    if (fs::exists(manifest)) stack.dims = load_stack_manifest(manifest);

    for (std::size_t z = 0; z < files.size(); ++z) {
        GrayImage img = read_gray_png(files[z]);
        if (z > 0 && (img.width != stack.width() || img.height != stack.height()))
            throw ValidationError("slice dimension mismatch in " + files[z].string());
        Slice s;
        s.z = static_cast<int>(z);
        s.width = img.width;
        s.height = img.height;
        s.intensities.resize(img.pixels.size());
        const double scale = img.bit_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
        for (std::size_t i = 0; i < img.pixels.size(); ++i)
            s.intensities[i] = static_cast<double>(img.pixels[i]) * scale;
        stack.slices.push_back(std::move(s));
    }
    stack.validate();
    return stack;
}

inline void save_stack_manifest(const Stack& stack, const fs::path& dir) {
    nlohmann::ordered_json j;
    j["dx_nm"] = stack.dims.dx_nm;
    j["dy_nm"] = stack.dims.dy_nm;
    j["dz_nm"] = stack.dims.dz_nm;
    std::ofstream out(dir / "stack.json");
    if (!out) throw IoError("cannot write " + (dir / "stack.json").string());
    out << j.dump(2) << "\n";
}

// Quantizes to the requested bit depth (8 or 16) and writes one PNG per slice
// plus the stack.json manifest.
inline void save_stack(const Stack& stack, const fs::path& dir, int bit_depth = 16) {
    if (bit_depth != 8 && bit_depth != 16)
        throw ValidationError("save_stack: bit depth must be 8 or 16");
    stack.validate();
    if (stack.depth() > 10000)
        throw ValidationError("save_stack: more than 10000 slices does not fit zNNNN naming");
    fs::create_directories(dir);
    for (const Slice& s : stack.slices) {
        fs::path path = dir / slice_filename(s.z);
        if (bit_depth == 8) {
            std::vector<std::uint8_t> q(s.intensities.size());
            for (std::size_t i = 0; i < q.size(); ++i)
                q[i] = static_cast<std::uint8_t>(std::lround(s.intensities[i] * 255.0));
            write_gray_png8(path, s.width, s.height, q);
        } else {
            std::vector<std::uint16_t> q(s.intensities.size());
            for (std::size_t i = 0; i < q.size(); ++i)
                q[i] = static_cast<std::uint16_t>(std::lround(s.intensities[i] * 65535.0));
            write_gray_png16(path, s.width, s.height, q);
        }
    }
    save_stack_manifest(stack, dir);
}

inline LabelVolume load_label_volume(const fs::path& dir) {
    std::vector<fs::path> files = detail::indexed_files(dir, "labels_z", "label");
    LabelVolume vol;
    for (std::size_t z = 0; z < files.size(); ++z) {
        GrayImage img = read_gray_png(files[z]);
        if (z == 0) {
            vol.width = img.width;
            vol.height = img.height;
        } else if (img.width != vol.width || img.height != vol.height) {
            throw ValidationError("label dimension mismatch in " + files[z].string());
        }
        vol.slices.push_back(std::move(img.pixels));
    }
    return vol;
}

inline void save_label_volume(const LabelVolume& vol, const fs::path& dir) {
    if (vol.depth() > 10000)
        throw ValidationError("save_label_volume: more than 10000 slices");
    fs::create_directories(dir);
    for (int z = 0; z < vol.depth(); ++z)
        write_gray_png16(dir / label_filename(z), vol.width, vol.height, vol.slices[z]);
}

}  // namespace arpipe
