#pragma once

// Proposal-to-object matching scores.
//
//   semantic    top-k mean of class-token cosine similarities over an object's templates
//   appearance  max over templates of the cyclic-filtered mean best-patch similarity
//   object      ((semantic + clamp(w_appe * appearance)) / 2) * proposal confidence
//
// instance_score_matrix evaluates the object score for every
// (proposal, object) pair in tiles of batch_proposals x batch_objects. All
// patch similarity blocks of a tile live in one buffer, which is the only
// allocation that scales with patches^2.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "noctis/descriptor.hpp"
#include "noctis/error.hpp"
#include "noctis/similarity.hpp"

namespace noctis {

enum class AppearanceAggregation { Max };

struct ScoreConfig {
    double delta_ct = 5.0;
    double w_appe = 2.0;
    bool clamp_weighted_appearance = true;
    int semantic_top_k = 5;
    AppearanceAggregation appearance_aggregation = AppearanceAggregation::Max;
    std::size_t batch_proposals = 8;
    std::size_t batch_objects = 4;

    void validate() const {
        if (!(delta_ct >= 0.0)) {
            throw InvalidInput("delta_ct must be >= 0");
        }
        if (!(w_appe > 0.0)) {
            throw InvalidInput("w_appe must be > 0");
        }
        if (semantic_top_k < 1) {
            throw InvalidInput("semantic_top_k must be >= 1");
        }
        if (batch_proposals < 1 || batch_objects < 1) {
            throw InvalidInput("batch sizes must be >= 1");
        }
    }
};

struct InstanceScoreMatrix {
    std::size_t rows = 0; // proposals
    std::size_t cols = 0; // objects
    std::vector<double> scores;
    std::vector<std::size_t> proposal_ids;
    std::vector<ObjectId> object_ids;

    double at(std::size_t p, std::size_t k) const { return scores[p * cols + k]; }
    std::span<const double> row(std::size_t p) const { return {scores.data() + p * cols, cols}; }
};

// Buffer accounting for one instance_score_matrix call.
struct ScoringStats {
    std::size_t tiles = 0;
    std::size_t patch_buffer_allocations = 0;
    std::size_t patch_buffer_reals = 0;
    // batch_proposals * batch_objects * max templates per object * cells^2
    std::size_t patch_buffer_bound = 0;
};

namespace scoring_detail {

inline double top_k_mean(std::vector<double> sims, int top_k) {
    if (sims.empty()) {
        throw InvalidInput("semantic score needs at least one template");
    }
    const auto k = std::min(sims.size(), static_cast<std::size_t>(top_k));
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(k), sims.end(), std::greater<>{});
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        sum += sims[i];
    }
    return sum / static_cast<double>(k);
}

// Sub-appearance score from a row-major crop x template similarity block.
// The denominator counts every valid crop patch; filtered patches add 0.
inline double sub_appearance(std::span<const double> sims, std::size_t n_crop, std::size_t n_tmpl,
                             std::span<const GridPos> crop_positions, double delta_ct) {
    const auto cmap = cyclic_distance_map(sims, n_crop, n_tmpl, crop_positions);
    double sum = 0.0;
    for (std::size_t l = 0; l < n_crop; ++l) {
        if (cmap.cdist[l] <= delta_ct) {
            sum += sims[l * n_tmpl + cmap.best_match_in_b[l]];
        }
    }
    return sum / static_cast<double>(n_crop);
}

} // namespace scoring_detail

inline double semantic_score(std::span<const float> proposal_cls, std::span<const EmbeddingVector> template_cls,
                             int top_k) {
    std::vector<double> sims;
    sims.reserve(template_cls.size());
    for (const auto& t : template_cls) {
        sims.push_back(cosine_similarity(proposal_cls, t));
    }
    return scoring_detail::top_k_mean(std::move(sims), top_k);
}

inline double semantic_score(std::span<const float> proposal_cls, std::span<const PatchGridDescriptor> templates,
                             int top_k) {
    std::vector<double> sims;
    sims.reserve(templates.size());
    for (const auto& t : templates) {
        sims.push_back(cosine_similarity(proposal_cls, t.cls));
    }
    return scoring_detail::top_k_mean(std::move(sims), top_k);
}

inline double sub_appearance_score(const PatchGridDescriptor& crop, const PatchGridDescriptor& tmpl,
                                   double delta_ct) {
    if (!(delta_ct >= 0.0)) {
        throw InvalidInput("delta_ct must be >= 0");
    }
    const auto m = pairwise_patch_similarity(crop, tmpl);
    return scoring_detail::sub_appearance(m.values, m.rows, m.cols, m.row_positions, delta_ct);
}

inline double appearance_score(const PatchGridDescriptor& crop, std::span<const PatchGridDescriptor> templates,
                               double delta_ct) {
    if (templates.empty()) {
        throw InvalidInput("appearance score needs at least one template");
    }
    double best = sub_appearance_score(crop, templates[0], delta_ct);
    for (std::size_t i = 1; i < templates.size(); ++i) {
        best = std::max(best, sub_appearance_score(crop, templates[i], delta_ct));
    }
    return best;
}

inline double proposal_confidence(double box_conf, double mask_conf) {
    if (!(box_conf >= 0.0 && box_conf <= 1.0 && mask_conf >= 0.0 && mask_conf <= 1.0)) {
        throw InvalidInput("proposal confidences must lie in [0, 1]");
    }
    return (box_conf + mask_conf) / 2.0;
}

inline double object_matching_score(double s_sem, double s_appe, double conf, const ScoreConfig& cfg) {
    if (!(conf >= 0.0 && conf <= 1.0)) {
        throw InvalidInput("proposal confidence must lie in [0, 1]");
    }
    double appe = cfg.w_appe * s_appe;
    if (cfg.clamp_weighted_appearance) {
        appe = std::clamp(appe, 0.0, 1.0);
    }
    return (s_sem + appe) / 2.0 * conf;
}

inline InstanceScoreMatrix instance_score_matrix(const SceneProposals& scene, const TemplateLibrary& lib,
                                                 const ScoreConfig& cfg, ScoringStats* stats = nullptr) {
    cfg.validate();
    if (scene.embed_dim != lib.embed_dim || scene.grid != lib.grid) {
        throw InvalidInput("dimension mismatch between scene descriptors and template library");
    }
    if (lib.objects.empty()) {
        throw InvalidInput("empty library");
    }

    const std::size_t n_props = scene.proposals.size();
    const std::size_t n_objs = lib.objects.size();

    InstanceScoreMatrix out;
    out.rows = n_props;
    out.cols = n_objs;
    out.scores.assign(n_props * n_objs, 0.0);
    for (std::size_t p = 0; p < n_props; ++p) {
        out.proposal_ids.push_back(p);
    }
    for (const auto& o : lib.objects) {
        out.object_ids.push_back(o.object_id);
    }

    ScoringStats local;
    local.patch_buffer_bound =
        cfg.batch_proposals * cfg.batch_objects * lib.max_templates_per_object() * lib.grid.cells() * lib.grid.cells();

    std::vector<sim_detail::ValidPatches> crops;
    crops.reserve(n_props);
    for (const auto& p : scene.proposals) {
        crops.push_back(sim_detail::pack(p.descriptor));
    }
    std::vector<std::vector<sim_detail::ValidPatches>> tmpls(n_objs);
    for (std::size_t k = 0; k < n_objs; ++k) {
        for (const auto& t : lib.objects[k].templates) {
            tmpls[k].push_back(sim_detail::pack(t));
        }
    }

    // Size the shared tile buffer for the largest tile.
    auto tile_need = [&](std::size_t p0, std::size_t p1, std::size_t k0, std::size_t k1) {
        std::size_t need = 0;
        for (std::size_t p = p0; p < p1; ++p) {
            for (std::size_t k = k0; k < k1; ++k) {
                for (const auto& t : tmpls[k]) {
                    need += crops[p].size() * t.size();
                }
            }
        }
        return need;
    };
    std::size_t capacity = 0;
    for (std::size_t p0 = 0; p0 < n_props; p0 += cfg.batch_proposals) {
        const auto p1 = std::min(n_props, p0 + cfg.batch_proposals);
        for (std::size_t k0 = 0; k0 < n_objs; k0 += cfg.batch_objects) {
            capacity = std::max(capacity, tile_need(p0, p1, k0, std::min(n_objs, k0 + cfg.batch_objects)));
        }
    }
    std::vector<double> buffer;
    if (capacity > 0) {
        buffer.resize(capacity);
        local.patch_buffer_allocations = 1;
        local.patch_buffer_reals = capacity;
    }

    std::vector<std::size_t> offsets;
    for (std::size_t p0 = 0; p0 < n_props; p0 += cfg.batch_proposals) {
        const auto p1 = std::min(n_props, p0 + cfg.batch_proposals);
        for (std::size_t k0 = 0; k0 < n_objs; k0 += cfg.batch_objects) {
            const auto k1 = std::min(n_objs, k0 + cfg.batch_objects);
            ++local.tiles;

            // Stage 1: every similarity block of the tile.
            offsets.clear();
            std::size_t offset = 0;
            for (std::size_t p = p0; p < p1; ++p) {
                for (std::size_t k = k0; k < k1; ++k) {
                    for (const auto& t : tmpls[k]) {
                        const auto n = crops[p].size() * t.size();
                        sim_detail::fill_similarity(crops[p], t, std::span<double>(buffer).subspan(offset, n));
                        offsets.push_back(offset);
                        offset += n;
                    }
                }
            }

            // Stage 2: reduce each cell from its own blocks, in template order.
            std::size_t block = 0;
            for (std::size_t p = p0; p < p1; ++p) {
                const auto& prop = scene.proposals[p];
                const double conf = proposal_confidence(prop.box_conf, prop.mask_conf);
                for (std::size_t k = k0; k < k1; ++k) {
                    const auto& templates = lib.objects[k].templates;
                    const double sem = semantic_score(prop.descriptor.cls, templates, cfg.semantic_top_k);
                    double appe = 0.0;
                    for (std::size_t i = 0; i < tmpls[k].size(); ++i, ++block) {
                        const auto n_t = tmpls[k][i].size();
                        const auto sims = std::span<const double>(buffer).subspan(offsets[block], crops[p].size() * n_t);
                        const double sub =
                            scoring_detail::sub_appearance(sims, crops[p].size(), n_t, crops[p].positions, cfg.delta_ct);
                        appe = i == 0 ? sub : std::max(appe, sub);
                    }
                    out.scores[p * n_objs + k] = object_matching_score(sem, appe, conf, cfg);
                }
            }
        }
    }

    if (stats) {
        *stats = local;
    }
    return out;
}

} // namespace noctis
