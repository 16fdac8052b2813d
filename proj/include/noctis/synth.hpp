#pragma once

// Deterministic synthetic benchmarks: random template libraries, proposal
// scenes with planted object identities, and the matching ground truth.
//
// Every template embedding (class token and each valid patch) is an
// isotropic random unit vector. A planted proposal copies one template of
// one object and, when noise_sigma > 0, adds N(0, noise_sigma^2) noise to
// every component before renormalizing each vector. Distractors are fresh
// random descriptors with no ground truth. Proposal masks are rectangles in
// disjoint cells of the image, so masks never overlap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "noctis/descriptor.hpp"
#include "noctis/descriptor_store.hpp"
#include "noctis/error.hpp"
#include "noctis/evaluation.hpp"
#include "noctis/rle.hpp"

namespace noctis {

struct SynthConfig {
    std::uint64_t seed = 0;
    int n_objects = 5;
    int n_templates = 7;
    int n_proposals = 20;
    int n_scenes = 1;
    std::size_t embed_dim = kDefaultEmbedDim;
    int grid = kDefaultGridSize;
    double noise_sigma = 0.05;
    double distractor_fraction = 0.0;
    // Side of the square image cell that holds one proposal mask, in pixels.
    int cell_px = 32;

    void validate() const {
        if (n_objects < 1 || n_templates < 1 || n_proposals < 1 || n_scenes < 1) {
            throw InvalidInput("synthetic object, template, proposal and scene counts must be positive");
        }
        if (embed_dim < 1 || grid < 1) {
            throw InvalidInput("embed_dim and grid must be positive");
        }
        if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
            throw InvalidInput("noise_sigma must be >= 0");
        }
        if (!(distractor_fraction >= 0.0 && distractor_fraction <= 1.0)) {
            throw InvalidInput("distractor_fraction must lie in [0, 1]");
        }
        if (cell_px < 4) {
            throw InvalidInput("cell_px must be >= 4");
        }
    }
};

struct SynthBenchmark {
    TemplateLibrary library;
    std::vector<SceneProposals> scenes;
    std::vector<GroundTruthAnnotation> ground_truth;
    // planted[s][i]: object planted in proposal i of scene s, empty for distractors.
    std::vector<std::vector<std::optional<ObjectId>>> planted;
};

namespace synth_detail {

// mt19937_64 is fully specified by the standard; the distributions are not,
// so uniforms and normals are derived here to keep outputs platform independent.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

    int integer(int lo, int hi) { return lo + static_cast<int>(index(static_cast<std::size_t>(hi - lo + 1))); }

    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

  private:
    std::mt19937_64 engine_;
};

inline void normalize(std::span<float> v) {
    double ss = 0.0;
    for (float x : v) {
        ss += static_cast<double>(x) * x;
    }
    const double n = std::sqrt(ss);
    for (auto& x : v) {
        x = static_cast<float>(x / n);
    }
}

inline void random_unit(Rng& rng, std::span<float> v) {
    for (auto& x : v) {
        x = static_cast<float>(rng.normal());
    }
    normalize(v);
}

// Connected 4-neighbour blob covering 25%..60% of the grid.
inline std::vector<std::uint8_t> random_blob(Rng& rng, GridShape grid) {
    const auto cells = grid.cells();
    const auto target = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(rng.uniform(0.25, 0.6) * static_cast<double>(cells))));
    std::vector<std::uint8_t> valid(cells, 0);
    std::vector<std::size_t> frontier{rng.index(cells)};
    std::vector<std::uint8_t> queued(cells, 0);
    queued[frontier[0]] = 1;
    std::size_t count = 0;
    while (count < target && !frontier.empty()) {
        const auto pick = rng.index(frontier.size());
        const auto cell = frontier[pick];
        frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(pick));
        valid[cell] = 1;
        ++count;
        const int r = static_cast<int>(cell) / grid.cols;
        const int c = static_cast<int>(cell) % grid.cols;
        const int dr[4] = {-1, 1, 0, 0};
        const int dc[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            const int nr = r + dr[k], nc = c + dc[k];
            if (nr < 0 || nc < 0 || nr >= grid.rows || nc >= grid.cols) {
                continue;
            }
            const auto n = static_cast<std::size_t>(nr * grid.cols + nc);
            if (!queued[n]) {
                queued[n] = 1;
                frontier.push_back(n);
            }
        }
    }
    return valid;
}

inline PatchGridDescriptor random_descriptor(Rng& rng, GridShape grid, std::size_t dim) {
    PatchGridDescriptor d(grid, dim);
    random_unit(rng, d.cls);
    d.valid = random_blob(rng, grid);
    for (std::size_t cell = 0; cell < grid.cells(); ++cell) {
        if (d.valid[cell]) {
            random_unit(rng, d.patch(cell));
        }
    }
    return d;
}

inline void perturb(Rng& rng, std::span<float> v, double sigma) {
    for (auto& x : v) {
        x = static_cast<float>(x + sigma * rng.normal());
    }
    normalize(v);
}

inline PatchGridDescriptor noisy_copy(Rng& rng, const PatchGridDescriptor& src, double sigma) {
    PatchGridDescriptor d = src;
    if (sigma == 0.0) {
        return d;
    }
    perturb(rng, d.cls, sigma);
    for (std::size_t cell = 0; cell < d.grid.cells(); ++cell) {
        if (d.valid[cell]) {
            perturb(rng, d.patch(cell), sigma);
        }
    }
    return d;
}

} // namespace synth_detail

inline SynthBenchmark make_benchmark(const SynthConfig& cfg) {
    using namespace synth_detail;
    cfg.validate();
    Rng rng(cfg.seed);
    const GridShape grid{cfg.grid, cfg.grid};

    SynthBenchmark bench;
    bench.library.embed_dim = cfg.embed_dim;
    bench.library.grid = grid;
    for (int k = 0; k < cfg.n_objects; ++k) {
        ObjectTemplates obj;
        obj.object_id = k + 1;
        for (int t = 0; t < cfg.n_templates; ++t) {
            obj.templates.push_back(random_descriptor(rng, grid, cfg.embed_dim));
        }
        bench.library.objects.push_back(std::move(obj));
    }

    const int n = cfg.n_proposals;
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const int rows = (n + cols - 1) / cols;
    const auto n_distractors = static_cast<std::size_t>(std::llround(cfg.distractor_fraction * n));

    for (int s = 0; s < cfg.n_scenes; ++s) {
        SceneProposals scene;
        scene.scene_id = s;
        scene.image_id = 0;
        scene.image_size = {cols * cfg.cell_px, rows * cfg.cell_px};
        scene.embed_dim = cfg.embed_dim;
        scene.grid = grid;

        // Fisher-Yates over proposal slots; the first n_distractors become distractors.
        std::vector<std::size_t> order(static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        for (std::size_t i = order.size(); i-- > 1;) {
            std::swap(order[i], order[rng.index(i + 1)]);
        }
        std::vector<std::uint8_t> is_distractor(order.size(), 0);
        for (std::size_t i = 0; i < n_distractors; ++i) {
            is_distractor[order[i]] = 1;
        }

        std::vector<std::optional<ObjectId>> planted;
        for (int i = 0; i < n; ++i) {
            ProposalRecord p;
            const int half = cfg.cell_px / 2;
            const int w = rng.integer(half, cfg.cell_px - 2);
            const int h = rng.integer(half, cfg.cell_px - 2);
            const int x = (i % cols) * cfg.cell_px + rng.integer(0, cfg.cell_px - w);
            const int y = (i / cols) * cfg.cell_px + rng.integer(0, cfg.cell_px - h);
            BinaryMask mask(scene.image_size.height, scene.image_size.width);
            for (int r = y; r < y + h; ++r) {
                for (int c = x; c < x + w; ++c) {
                    mask.at(r, c) = 1;
                }
            }
            p.bbox = {x, y, w, h};
            p.mask = rle_encode(mask);

            if (is_distractor[static_cast<std::size_t>(i)]) {
                p.box_conf = rng.uniform(0.3, 1.0);
                p.mask_conf = rng.uniform(0.3, 1.0);
                p.descriptor = random_descriptor(rng, grid, cfg.embed_dim);
                planted.emplace_back();
            } else {
                p.box_conf = rng.uniform(0.6, 1.0);
                p.mask_conf = rng.uniform(0.6, 1.0);
                const auto& obj = bench.library.objects[rng.index(bench.library.objects.size())];
                const auto& tmpl = obj.templates[rng.index(obj.templates.size())];
                p.descriptor = noisy_copy(rng, tmpl, cfg.noise_sigma);
                planted.emplace_back(obj.object_id);
                bench.ground_truth.push_back({scene.scene_id, scene.image_id, obj.object_id, p.mask, false});
            }
            scene.proposals.push_back(std::move(p));
        }
        bench.scenes.push_back(std::move(scene));
        bench.planted.push_back(std::move(planted));
    }
    return bench;
}

inline std::string scene_dir_name(const SceneProposals& scene) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "scene_%06lld_%06lld", static_cast<long long>(scene.scene_id),
                  static_cast<long long>(scene.image_id));
    return buf;
}

// Writes out/templates/, out/proposals/<scene>/ and out/gt.json.
inline void write_benchmark(const SynthBenchmark& bench, const std::filesystem::path& out) {
    write_template_library(bench.library, out / "templates");
    for (const auto& scene : bench.scenes) {
        write_scene_proposals(scene, out / "proposals" / scene_dir_name(scene));
    }
    write_ground_truth(out / "gt.json", bench.ground_truth);
}

inline void generate_benchmark(const SynthConfig& cfg, const std::filesystem::path& out) {
    write_benchmark(make_benchmark(cfg), out);
}

} // namespace noctis
