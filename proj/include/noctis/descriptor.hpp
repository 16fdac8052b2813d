#pragma once

// Descriptor data model: one embedded image crop (class token plus a grid of
// patch tokens with mask validity), per-object template sets, and per-image
// proposal sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "noctis/error.hpp"
#include "noctis/rle.hpp"

namespace noctis {

inline constexpr std::size_t kDefaultEmbedDim = 1024;
inline constexpr int kDefaultGridSize = 16;

using EmbeddingVector = std::vector<float>;
using ObjectId = std::int64_t;

struct GridShape {
    int rows = kDefaultGridSize;
    int cols = kDefaultGridSize;

    std::size_t cells() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
    // Largest Euclidean distance between two cells of the grid.
    double diagonal() const { return std::sqrt(static_cast<double>((rows - 1) * (rows - 1) + (cols - 1) * (cols - 1))); }

    bool operator==(const GridShape&) const = default;
};

struct GridPos {
    int row = 0;
    int col = 0;

    bool operator==(const GridPos&) const = default;
};

inline double grid_distance(GridPos a, GridPos b) {
    const double dr = a.row - b.row;
    const double dc = a.col - b.col;
    return std::sqrt(dr * dr + dc * dc);
}

struct PatchGridDescriptor {
    GridShape grid;
    std::size_t embed_dim = 0;
    EmbeddingVector cls;
    // rows*cols*embed_dim values; cell (r, c) starts at ((r*cols)+c)*embed_dim.
    std::vector<float> patches;
    // One byte per cell, 1 = the cell lies inside the instance mask.
    std::vector<std::uint8_t> valid;

    PatchGridDescriptor() = default;
    PatchGridDescriptor(GridShape g, std::size_t dim)
        : grid(g), embed_dim(dim), cls(dim, 0.0f), patches(g.cells() * dim, 0.0f), valid(g.cells(), 0) {}

    std::span<const float> patch(std::size_t cell) const {
        return {patches.data() + cell * embed_dim, embed_dim};
    }
    std::span<float> patch(std::size_t cell) { return {patches.data() + cell * embed_dim, embed_dim}; }

    GridPos position(std::size_t cell) const {
        return {static_cast<int>(cell / static_cast<std::size_t>(grid.cols)),
                static_cast<int>(cell % static_cast<std::size_t>(grid.cols))};
    }

    std::size_t valid_count() const {
        std::size_t n = 0;
        for (auto v : valid) {
            n += v ? 1 : 0;
        }
        return n;
    }

    std::vector<std::size_t> valid_cells() const {
        std::vector<std::size_t> out;
        out.reserve(valid.size());
        for (std::size_t i = 0; i < valid.size(); ++i) {
            if (valid[i]) {
                out.push_back(i);
            }
        }
        return out;
    }

    bool operator==(const PatchGridDescriptor&) const = default;
};

struct ObjectTemplates {
    ObjectId object_id = 0;
    std::vector<PatchGridDescriptor> templates;

    bool operator==(const ObjectTemplates&) const = default;
};

// Column order of every score matrix follows `objects`. Container readers
// return objects sorted by object_id.
struct TemplateLibrary {
    std::size_t embed_dim = kDefaultEmbedDim;
    GridShape grid;
    std::vector<ObjectTemplates> objects;

    std::size_t max_templates_per_object() const {
        std::size_t n = 0;
        for (const auto& o : objects) {
            n = std::max(n, o.templates.size());
        }
        return n;
    }

    bool operator==(const TemplateLibrary&) const = default;
};

struct BoundingBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool operator==(const BoundingBox&) const = default;
};

struct ImageSize {
    int width = 0;
    int height = 0;

    bool operator==(const ImageSize&) const = default;
};

struct ProposalRecord {
    BoundingBox bbox;
    RleMask mask;
    double box_conf = 0.0;
    double mask_conf = 0.0;
    PatchGridDescriptor descriptor;

    bool operator==(const ProposalRecord&) const = default;
};

struct SceneProposals {
    std::int64_t scene_id = 0;
    std::int64_t image_id = 0;
    ImageSize image_size;
    std::size_t embed_dim = kDefaultEmbedDim;
    GridShape grid;
    std::vector<ProposalRecord> proposals;

    bool operator==(const SceneProposals&) const = default;
};

// Bitwise float comparison; operator== treats +0 and -0 as equal.
inline bool bit_equal(std::span<const float> a, std::span<const float> b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size_bytes()) == 0);
}

inline void validate_descriptor(const PatchGridDescriptor& d, std::size_t embed_dim, GridShape grid,
                                const std::string& what) {
    if (d.embed_dim != embed_dim || d.grid != grid) {
        throw InvalidInput(what + ": descriptor shape does not match container");
    }
    if (d.cls.size() != embed_dim || d.patches.size() != grid.cells() * embed_dim ||
        d.valid.size() != grid.cells()) {
        throw InvalidInput(what + ": descriptor buffers have wrong length");
    }
    for (float v : d.cls) {
        if (!std::isfinite(v)) {
            throw InvalidInput(what + ": non-finite class embedding");
        }
    }
    std::size_t n_valid = 0;
    for (std::size_t cell = 0; cell < grid.cells(); ++cell) {
        const auto flag = d.valid[cell];
        if (flag > 1) {
            throw InvalidInput(what + ": validity flag must be 0 or 1");
        }
        n_valid += flag;
        for (float v : d.patch(cell)) {
            if (!std::isfinite(v)) {
                throw InvalidInput(what + ": non-finite patch embedding");
            }
            if (!flag && v != 0.0f) {
                throw InvalidInput(what + ": invalid patch has nonzero embedding");
            }
        }
    }
    if (n_valid == 0) {
        throw InvalidInput(what + ": descriptor has no valid patch");
    }
}

inline void validate_library(const TemplateLibrary& lib) {
    if (lib.embed_dim == 0 || lib.grid.rows <= 0 || lib.grid.cols <= 0) {
        throw InvalidInput("template library has empty embedding or grid shape");
    }
    if (lib.objects.empty()) {
        throw InvalidInput("empty library");
    }
    std::unordered_set<ObjectId> seen;
    for (const auto& obj : lib.objects) {
        const auto tag = "object " + std::to_string(obj.object_id);
        if (obj.object_id <= 0) {
            throw InvalidInput(tag + ": object_id must be positive");
        }
        if (!seen.insert(obj.object_id).second) {
            throw InvalidInput(tag + ": duplicate object_id");
        }
        if (obj.templates.empty()) {
            throw InvalidInput(tag + ": no templates");
        }
        for (std::size_t t = 0; t < obj.templates.size(); ++t) {
            validate_descriptor(obj.templates[t], lib.embed_dim, lib.grid, tag + " template " + std::to_string(t));
        }
    }
}

inline void validate_scene(const SceneProposals& scene) {
    if (scene.embed_dim == 0 || scene.grid.rows <= 0 || scene.grid.cols <= 0) {
        throw InvalidInput("scene has empty embedding or grid shape");
    }
    if (scene.scene_id < 0 || scene.image_id < 0) {
        throw InvalidInput("scene and image ids must be non-negative");
    }
    if (scene.image_size.width <= 0 || scene.image_size.height <= 0) {
        throw InvalidInput("image size must be positive");
    }
    for (std::size_t i = 0; i < scene.proposals.size(); ++i) {
        const auto& p = scene.proposals[i];
        const auto tag = "proposal " + std::to_string(i);
        const auto& b = p.bbox;
        if (b.x < 0 || b.y < 0 || b.w < 0 || b.h < 0 || b.x + b.w > scene.image_size.width ||
            b.y + b.h > scene.image_size.height) {
            throw InvalidInput(tag + ": bbox outside image bounds");
        }
        if (p.mask.height != scene.image_size.height || p.mask.width != scene.image_size.width) {
            throw InvalidInput(tag + ": mask size does not match image size");
        }
        validate_rle(p.mask);
        if (!(p.box_conf >= 0.0 && p.box_conf <= 1.0 && p.mask_conf >= 0.0 && p.mask_conf <= 1.0)) {
            throw InvalidInput(tag + ": confidences must lie in [0, 1]");
        }
        validate_descriptor(p.descriptor, scene.embed_dim, scene.grid, tag);
    }
}

} // namespace noctis
