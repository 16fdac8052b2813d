#pragma once

// On-disk descriptor containers ("noctis-desc/1").
//
// A container is a directory holding manifest.json plus one raw blob per
// descriptor field:
//   <name>.cls.f32    embed_dim little-endian float32
//   <name>.patch.f32  rows*cols*embed_dim little-endian float32, row-major grid,
//                     embedding-contiguous
//   <name>.valid.u8   rows*cols bytes, 0 or 1
// Blob paths in the manifest are relative to the container directory.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noctis/descriptor.hpp"
#include "noctis/error.hpp"
#include "noctis/rle.hpp"

namespace noctis {

inline constexpr const char* kFormatTag = "noctis-desc/1";

namespace store_detail {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

inline std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
    return v;
}

inline void write_bytes(const fs::path& path, const char* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

inline std::vector<char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("missing blob: " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_f32(const fs::path& path, std::span<const float> values) {
    std::vector<char> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::uint32_t le = to_little(std::bit_cast<std::uint32_t>(values[i]));
        std::memcpy(bytes.data() + 4 * i, &le, 4);
    }
    write_bytes(path, bytes.data(), bytes.size());
}

inline std::vector<float> read_f32(const fs::path& path, std::size_t count) {
    const auto bytes = read_bytes(path);
    if (bytes.size() != count * 4) {
        throw InvalidInput("blob length mismatch: " + path.string() + " has " + std::to_string(bytes.size()) +
                           " bytes, expected " + std::to_string(count * 4));
    }
    std::vector<float> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t le;
        std::memcpy(&le, bytes.data() + 4 * i, 4);
        out[i] = std::bit_cast<float>(to_little(le));
    }
    return out;
}

inline std::vector<std::uint8_t> read_u8(const fs::path& path, std::size_t count) {
    const auto bytes = read_bytes(path);
    if (bytes.size() != count) {
        throw InvalidInput("blob length mismatch: " + path.string() + " has " + std::to_string(bytes.size()) +
                           " bytes, expected " + std::to_string(count));
    }
    return {bytes.begin(), bytes.end()};
}

// Writes the three blobs for `d` under dir/stem.* and returns their manifest entry.
inline ordered_json write_descriptor(const fs::path& dir, const std::string& stem, const PatchGridDescriptor& d) {
    const auto parent = fs::path(stem).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        fs::create_directories(dir / parent, ec);
        if (ec) {
            throw IoError("cannot create directory " + (dir / parent).string() + ": " + ec.message());
        }
    }
    write_f32(dir / (stem + ".cls.f32"), d.cls);
    write_f32(dir / (stem + ".patch.f32"), d.patches);
    write_bytes(dir / (stem + ".valid.u8"), reinterpret_cast<const char*>(d.valid.data()), d.valid.size());
    ordered_json entry;
    entry["cls"] = stem + ".cls.f32";
    entry["patch"] = stem + ".patch.f32";
    entry["valid"] = stem + ".valid.u8";
    return entry;
}

inline PatchGridDescriptor read_descriptor(const fs::path& dir, const nlohmann::json& entry, std::size_t embed_dim,
                                           GridShape grid) {
    PatchGridDescriptor d;
    d.grid = grid;
    d.embed_dim = embed_dim;
    d.cls = read_f32(dir / entry.at("cls").get<std::string>(), embed_dim);
    d.patches = read_f32(dir / entry.at("patch").get<std::string>(), grid.cells() * embed_dim);
    d.valid = read_u8(dir / entry.at("valid").get<std::string>(), grid.cells());
    return d;
}

inline void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
    }
}

inline void write_manifest(const fs::path& dir, const ordered_json& manifest) {
    const auto text = manifest.dump(1);
    write_bytes(dir / "manifest.json", text.data(), text.size());
}

inline nlohmann::json read_manifest(const fs::path& dir) {
    const auto path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) {
        throw IoError("missing manifest: " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput("manifest is not valid JSON: " + path.string() + ": " + e.what());
    }
    const auto tag = j.value("format", std::string{});
    if (tag != kFormatTag) {
        if (tag.rfind("noctis-desc/", 0) == 0) {
            throw InvalidInput("unsupported version: " + tag);
        }
        throw InvalidInput("unknown format tag: '" + tag + "'");
    }
    return j;
}

inline void read_shape(const nlohmann::json& j, std::size_t& embed_dim, GridShape& grid) {
    embed_dim = j.at("embed_dim").get<std::size_t>();
    const auto& g = j.at("grid");
    if (!g.is_array() || g.size() != 2) {
        throw InvalidInput("manifest grid must be [rows, cols]");
    }
    grid = {g[0].get<int>(), g[1].get<int>()};
    if (embed_dim == 0 || grid.rows <= 0 || grid.cols <= 0) {
        throw InvalidInput("manifest declares an empty embedding or grid");
    }
}

template <typename Fn>
auto with_schema_errors(const std::string& what, Fn&& fn) {
    try {
        return fn();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(what + ": schema error: " + e.what());
    }
}

} // namespace store_detail

inline void write_template_library(const TemplateLibrary& lib, const std::filesystem::path& dir) {
    using namespace store_detail;
    validate_library(lib);
    ensure_directory(dir);
    ordered_json manifest;
    manifest["format"] = kFormatTag;
    manifest["embed_dim"] = lib.embed_dim;
    manifest["grid"] = {lib.grid.rows, lib.grid.cols};
    manifest["objects"] = ordered_json::array();
    for (const auto& obj : lib.objects) {
        ordered_json entry;
        entry["object_id"] = obj.object_id;
        entry["templates"] = ordered_json::array();
        char obj_dir[32];
        std::snprintf(obj_dir, sizeof(obj_dir), "obj_%06lld", static_cast<long long>(obj.object_id));
        for (std::size_t t = 0; t < obj.templates.size(); ++t) {
            char stem[64];
            std::snprintf(stem, sizeof(stem), "%s/tpl_%04zu", obj_dir, t);
            entry["templates"].push_back(write_descriptor(dir, stem, obj.templates[t]));
        }
        manifest["objects"].push_back(std::move(entry));
    }
    write_manifest(dir, manifest);
}

inline TemplateLibrary read_template_library(const std::filesystem::path& dir) {
    using namespace store_detail;
    const auto manifest = read_manifest(dir);
    auto lib = with_schema_errors(dir.string(), [&] {
        TemplateLibrary out;
        read_shape(manifest, out.embed_dim, out.grid);
        for (const auto& obj : manifest.at("objects")) {
            ObjectTemplates ot;
            ot.object_id = obj.at("object_id").get<ObjectId>();
            for (const auto& entry : obj.at("templates")) {
                ot.templates.push_back(read_descriptor(dir, entry, out.embed_dim, out.grid));
            }
            out.objects.push_back(std::move(ot));
        }
        return out;
    });
    std::stable_sort(lib.objects.begin(), lib.objects.end(),
                     [](const auto& a, const auto& b) { return a.object_id < b.object_id; });
    validate_library(lib);
    return lib;
}

inline void write_scene_proposals(const SceneProposals& scene, const std::filesystem::path& dir) {
    using namespace store_detail;
    validate_scene(scene);
    ensure_directory(dir);
    ordered_json manifest;
    manifest["format"] = kFormatTag;
    manifest["embed_dim"] = scene.embed_dim;
    manifest["grid"] = {scene.grid.rows, scene.grid.cols};
    manifest["scene_id"] = scene.scene_id;
    manifest["image_id"] = scene.image_id;
    manifest["image_size"] = {scene.image_size.width, scene.image_size.height};
    manifest["proposals"] = ordered_json::array();
    for (std::size_t i = 0; i < scene.proposals.size(); ++i) {
        const auto& p = scene.proposals[i];
        char stem[32];
        std::snprintf(stem, sizeof(stem), "prop_%04zu", i);
        ordered_json entry;
        entry["bbox"] = {p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h};
        entry["mask"] = rle_to_json(p.mask);
        entry["box_conf"] = p.box_conf;
        entry["mask_conf"] = p.mask_conf;
        const auto blobs = write_descriptor(dir, stem, p.descriptor);
        for (const auto& [key, value] : blobs.items()) {
            entry[key] = value;
        }
        manifest["proposals"].push_back(std::move(entry));
    }
    write_manifest(dir, manifest);
}

inline SceneProposals read_scene_proposals(const std::filesystem::path& dir) {
    using namespace store_detail;
    const auto manifest = read_manifest(dir);
    auto scene = with_schema_errors(dir.string(), [&] {
        SceneProposals out;
        read_shape(manifest, out.embed_dim, out.grid);
        out.scene_id = manifest.at("scene_id").get<std::int64_t>();
        out.image_id = manifest.at("image_id").get<std::int64_t>();
        const auto& size = manifest.at("image_size");
        if (!size.is_array() || size.size() != 2) {
            throw InvalidInput("image_size must be [W, H]");
        }
        out.image_size = {size[0].get<int>(), size[1].get<int>()};
        for (const auto& entry : manifest.at("proposals")) {
            ProposalRecord p;
            const auto& b = entry.at("bbox");
            if (!b.is_array() || b.size() != 4) {
                throw InvalidInput("bbox must be [x, y, w, h]");
            }
            p.bbox = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
            p.mask = rle_from_json(entry.at("mask"));
            p.box_conf = entry.at("box_conf").get<double>();
            p.mask_conf = entry.at("mask_conf").get<double>();
            p.descriptor = read_descriptor(dir, entry, out.embed_dim, out.grid);
            out.proposals.push_back(std::move(p));
        }
        return out;
    });
    validate_scene(scene);
    return scene;
}

// Accepts either one scene container or a directory whose immediate
// subdirectories are scene containers (read in lexicographic order).
inline std::vector<SceneProposals> read_scene_set(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (fs::exists(path / "manifest.json")) {
        return {read_scene_proposals(path)};
    }
    if (!fs::is_directory(path)) {
        throw IoError("no such proposal container: " + path.string());
    }
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
            dirs.push_back(entry.path());
        }
    }
    if (dirs.empty()) {
        throw IoError("no scene containers under " + path.string());
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<SceneProposals> scenes;
    scenes.reserve(dirs.size());
    for (const auto& d : dirs) {
        scenes.push_back(read_scene_proposals(d));
    }
    return scenes;
}

} // namespace noctis
