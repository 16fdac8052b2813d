#pragma once

// From scored proposals to final detections: prefilter, row-wise argmax,
// confidence threshold, and greedy mask NMS. Also the BOP-like result file.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noctis/descriptor.hpp"
#include "noctis/error.hpp"
#include "noctis/rle.hpp"
#include "noctis/scoring.hpp"

namespace noctis {

struct AssignmentConfig {
    double min_proposal_conf = 0.15;
    double min_relative_area = 1e-4;
    double conf_threshold = 0.2;
    double nms_iou = 0.5;

    void validate() const {
        auto unit = [](double v, const char* name) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw InvalidInput(std::string(name) + " must lie in [0, 1]");
            }
        };
        unit(min_proposal_conf, "min_proposal_conf");
        unit(min_relative_area, "min_relative_area");
        unit(conf_threshold, "conf_threshold");
        unit(nms_iou, "nms_iou");
    }
};

struct DetectionResult {
    std::int64_t scene_id = 0;
    std::int64_t image_id = 0;
    ObjectId object_id = 0;
    double score = 0.0;
    BoundingBox bbox;
    RleMask mask;
    // Index of the source proposal in its scene container.
    std::size_t proposal_index = 0;
    // Seconds spent on the image, -1 when not recorded.
    double time = -1.0;

    bool operator==(const DetectionResult&) const = default;
};

struct LabelAssignment {
    std::size_t proposal_id = 0;
    ObjectId object_id = 0;
    std::size_t object_index = 0;
    double score = 0.0;
};

// Indices of proposals with conf >= min_proposal_conf and
// mask area / image area >= min_relative_area, in input order.
inline std::vector<std::size_t> prefilter_indices(const SceneProposals& scene, const AssignmentConfig& cfg) {
    const double image_area = static_cast<double>(scene.image_size.width) * scene.image_size.height;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < scene.proposals.size(); ++i) {
        const auto& p = scene.proposals[i];
        const double conf = proposal_confidence(p.box_conf, p.mask_conf);
        const double rel_area = static_cast<double>(rle_area(p.mask)) / image_area;
        if (conf >= cfg.min_proposal_conf && rel_area >= cfg.min_relative_area) {
            keep.push_back(i);
        }
    }
    return keep;
}

inline SceneProposals prefilter_proposals(const SceneProposals& scene, const AssignmentConfig& cfg) {
    SceneProposals out = scene;
    out.proposals.clear();
    for (auto i : prefilter_indices(scene, cfg)) {
        out.proposals.push_back(scene.proposals[i]);
    }
    return out;
}

inline std::vector<LabelAssignment> assign_labels(const InstanceScoreMatrix& m) {
    if (m.cols == 0) {
        throw InvalidInput("assign_labels: score matrix has no objects");
    }
    std::vector<LabelAssignment> out;
    out.reserve(m.rows);
    for (std::size_t p = 0; p < m.rows; ++p) {
        const auto row = m.row(p);
        const auto k = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        out.push_back({m.proposal_ids[p], m.object_ids[k], k, row[k]});
    }
    return out;
}

inline std::vector<DetectionResult> confidence_filter(std::vector<DetectionResult> dets, double delta_conf) {
    std::erase_if(dets, [&](const DetectionResult& d) { return !(d.score >= delta_conf); });
    return dets;
}

// Greedy, label-agnostic NMS on mask IoU. Candidates are visited by score
// descending, then proposal index ascending; a candidate is dropped when its
// IoU with an already kept detection exceeds the threshold. Two empty masks
// count as IoU 0.
inline std::vector<DetectionResult> mask_nms(std::vector<DetectionResult> dets, double iou_threshold) {
    for (std::size_t i = 1; i < dets.size(); ++i) {
        if (dets[i].mask.height != dets[0].mask.height || dets[i].mask.width != dets[0].mask.width) {
            throw InvalidInput("mask_nms: mask size mismatch");
        }
    }
    std::stable_sort(dets.begin(), dets.end(), [](const DetectionResult& a, const DetectionResult& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.proposal_index < b.proposal_index;
    });
    std::vector<std::uint64_t> areas;
    areas.reserve(dets.size());
    for (const auto& d : dets) {
        areas.push_back(rle_area(d.mask));
    }
    std::vector<DetectionResult> kept;
    std::vector<std::uint64_t> kept_areas;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        bool suppressed = false;
        for (std::size_t j = 0; j < kept.size() && !suppressed; ++j) {
            const auto inter = rle_intersection_area(dets[i].mask, kept[j].mask);
            const auto uni = areas[i] + kept_areas[j] - inter;
            const double iou = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
            suppressed = iou > iou_threshold;
        }
        if (!suppressed) {
            kept.push_back(std::move(dets[i]));
            kept_areas.push_back(areas[i]);
        }
    }
    return kept;
}

// prefilter -> score matrix -> argmax -> confidence threshold -> mask NMS.
inline std::vector<DetectionResult> run_matching(const SceneProposals& scene, const TemplateLibrary& lib,
                                                 const ScoreConfig& score_cfg, const AssignmentConfig& assign_cfg,
                                                 ScoringStats* stats = nullptr) {
    score_cfg.validate();
    assign_cfg.validate();
    const auto keep = prefilter_indices(scene, assign_cfg);
    SceneProposals kept = scene;
    kept.proposals.clear();
    for (auto i : keep) {
        kept.proposals.push_back(scene.proposals[i]);
    }
    const auto matrix = instance_score_matrix(kept, lib, score_cfg, stats);
    std::vector<DetectionResult> dets;
    for (const auto& a : assign_labels(matrix)) {
        const auto& prop = kept.proposals[a.proposal_id];
        DetectionResult d;
        d.scene_id = scene.scene_id;
        d.image_id = scene.image_id;
        d.object_id = a.object_id;
        d.score = a.score;
        d.bbox = prop.bbox;
        d.mask = prop.mask;
        d.proposal_index = keep[a.proposal_id];
        dets.push_back(std::move(d));
    }
    return mask_nms(confidence_filter(std::move(dets), assign_cfg.conf_threshold), assign_cfg.nms_iou);
}

inline nlohmann::ordered_json detection_to_json(const DetectionResult& d) {
    nlohmann::ordered_json j;
    j["scene_id"] = d.scene_id;
    j["image_id"] = d.image_id;
    j["category_id"] = d.object_id;
    j["score"] = d.score;
    j["bbox"] = {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h};
    j["segmentation"] = rle_to_json(d.mask);
    j["time"] = d.time;
    return j;
}

// Single-line JSON array.
inline std::string results_to_json(std::span<const DetectionResult> dets) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& d : dets) {
        arr.push_back(detection_to_json(d));
    }
    return arr.dump();
}

inline std::vector<DetectionResult> results_from_json(const nlohmann::json& j) {
    if (!j.is_array()) {
        throw InvalidInput("result file must hold a JSON array");
    }
    std::vector<DetectionResult> out;
    try {
        for (const auto& e : j) {
            DetectionResult d;
            d.scene_id = e.at("scene_id").get<std::int64_t>();
            d.image_id = e.at("image_id").get<std::int64_t>();
            d.object_id = e.at("category_id").get<ObjectId>();
            d.score = e.at("score").get<double>();
            const auto& b = e.at("bbox");
            if (!b.is_array() || b.size() != 4) {
                throw InvalidInput("bbox must be [x, y, w, h]");
            }
            d.bbox = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
            d.mask = rle_from_json(e.at("segmentation"));
            d.time = e.value("time", -1.0);
            d.proposal_index = out.size();
            out.push_back(std::move(d));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("result file schema error: ") + e.what());
    }
    return out;
}

inline void write_results(const std::filesystem::path& path, std::span<const DetectionResult> dets) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << results_to_json(dets);
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

inline std::vector<DetectionResult> read_results(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read results: " + path.string());
    }
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        return {};
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput("result file is not valid JSON: " + std::string(e.what()));
    }
    return results_from_json(j);
}

} // namespace noctis
