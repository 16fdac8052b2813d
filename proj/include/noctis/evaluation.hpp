#pragma once

// Mask Average Precision in the BOP/COCO style.
//
// For every object and IoU threshold t, detections are visited by score
// (descending, stable) and each is matched to the unmatched ground truth of
// the same object and image with the highest IoU >= t. Matching an ignored
// ground truth makes the detection neither TP nor FP; ignored ground truths
// may absorb several detections. AP is the 101-point interpolated area under
// the precision/recall curve. Per-object AP averages over thresholds, and the
// mean AP averages over objects that have at least one non-ignored ground truth.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "noctis/assignment.hpp"
#include "noctis/error.hpp"
#include "noctis/rle.hpp"

namespace noctis {

struct GroundTruthAnnotation {
    std::int64_t scene_id = 0;
    std::int64_t image_id = 0;
    ObjectId object_id = 0;
    RleMask mask;
    bool ignore = false;

    bool operator==(const GroundTruthAnnotation&) const = default;
};

struct ApReport {
    std::map<ObjectId, double> per_object;
    // (threshold, AP averaged over objects), in the order thresholds were given.
    std::vector<std::pair<double, double>> per_iou;
    double mean_ap = 0.0;
};

// 0.50, 0.55, ..., 0.95
inline std::vector<double> bop_iou_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) {
        t.push_back(static_cast<double>(50 + 5 * i) / 100.0);
    }
    return t;
}

namespace eval_detail {

using ImageKey = std::tuple<std::int64_t, std::int64_t, ObjectId>;

inline double safe_iou(const RleMask& a, const RleMask& b) {
    const auto inter = rle_intersection_area(a, b);
    const auto uni = rle_area(a) + rle_area(b) - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// 101-point interpolated AP from per-detection TP/FP flags in rank order.
// `ignored` detections are skipped.
inline double interpolated_ap(std::span<const std::uint8_t> tp, std::span<const std::uint8_t> ignored,
                              std::size_t n_positive) {
    if (n_positive == 0) {
        return 0.0;
    }
    std::vector<double> precision, recall;
    std::size_t ntp = 0, nfp = 0;
    for (std::size_t i = 0; i < tp.size(); ++i) {
        if (ignored[i]) {
            continue;
        }
        (tp[i] ? ntp : nfp) += 1;
        precision.push_back(static_cast<double>(ntp) / static_cast<double>(ntp + nfp));
        recall.push_back(static_cast<double>(ntp) / static_cast<double>(n_positive));
    }
    for (std::size_t i = precision.size(); i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double sum = 0.0;
    for (int s = 0; s <= 100; ++s) {
        const double r = static_cast<double>(s) / 100.0;
        const auto it = std::lower_bound(recall.begin(), recall.end(), r);
        if (it != recall.end()) {
            sum += precision[static_cast<std::size_t>(it - recall.begin())];
        }
    }
    return sum / 101.0;
}

} // namespace eval_detail

inline ApReport average_precision(std::span<const DetectionResult> dets, std::span<const GroundTruthAnnotation> gts,
                                  std::span<const double> iou_thresholds) {
    using eval_detail::ImageKey;
    if (iou_thresholds.empty()) {
        throw InvalidInput("at least one IoU threshold is required");
    }
    for (double t : iou_thresholds) {
        if (!(t > 0.0 && t <= 1.0)) {
            throw InvalidInput("IoU thresholds must lie in (0, 1]");
        }
    }

    std::map<ImageKey, std::vector<std::size_t>> gt_by_image;
    std::map<ObjectId, std::size_t> positives;
    for (std::size_t g = 0; g < gts.size(); ++g) {
        const auto& gt = gts[g];
        gt_by_image[{gt.scene_id, gt.image_id, gt.object_id}].push_back(g);
        positives[gt.object_id] += gt.ignore ? 0 : 1;
    }
    std::map<ObjectId, std::vector<std::size_t>> dets_by_object;
    for (std::size_t d = 0; d < dets.size(); ++d) {
        dets_by_object[dets[d].object_id].push_back(d);
    }

    ApReport report;
    std::vector<double> iou_sums(iou_thresholds.size(), 0.0);
    for (const auto& [object_id, n_pos] : positives) {
        if (n_pos == 0) {
            continue;
        }
        auto order = dets_by_object[object_id];
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

        // IoU of each ranked detection against the GTs of its image.
        std::vector<const std::vector<std::size_t>*> candidates(order.size(), nullptr);
        std::vector<std::vector<double>> ious(order.size());
        for (std::size_t r = 0; r < order.size(); ++r) {
            const auto& d = dets[order[r]];
            const auto it = gt_by_image.find({d.scene_id, d.image_id, object_id});
            if (it == gt_by_image.end()) {
                continue;
            }
            candidates[r] = &it->second;
            for (auto g : it->second) {
                ious[r].push_back(eval_detail::safe_iou(d.mask, gts[g].mask));
            }
        }

        double ap_sum = 0.0;
        for (std::size_t ti = 0; ti < iou_thresholds.size(); ++ti) {
            const double t = iou_thresholds[ti];
            std::vector<std::uint8_t> tp(order.size(), 0), ignored(order.size(), 0);
            std::map<std::size_t, bool> taken;
            for (std::size_t r = 0; r < order.size(); ++r) {
                if (!candidates[r]) {
                    continue;
                }
                const auto& cand = *candidates[r];
                // Best unmatched regular GT first; an ignored GT only if none qualifies.
                std::ptrdiff_t best = -1, best_ignored = -1;
                double best_iou = -1.0, best_ignored_iou = -1.0;
                for (std::size_t c = 0; c < cand.size(); ++c) {
                    const double iou = ious[r][c];
                    if (iou < t) {
                        continue;
                    }
                    if (gts[cand[c]].ignore) {
                        if (iou > best_ignored_iou) {
                            best_ignored = static_cast<std::ptrdiff_t>(c);
                            best_ignored_iou = iou;
                        }
                    } else if (!taken[cand[c]] && iou > best_iou) {
                        best = static_cast<std::ptrdiff_t>(c);
                        best_iou = iou;
                    }
                }
                if (best >= 0) {
                    taken[cand[static_cast<std::size_t>(best)]] = true;
                    tp[r] = 1;
                } else if (best_ignored >= 0) {
                    ignored[r] = 1;
                }
            }
            const double ap = eval_detail::interpolated_ap(tp, ignored, n_pos);
            ap_sum += ap;
            iou_sums[ti] += ap;
        }
        report.per_object[object_id] = ap_sum / static_cast<double>(iou_thresholds.size());
    }

    const auto n_objects = report.per_object.size();
    for (std::size_t ti = 0; ti < iou_thresholds.size(); ++ti) {
        report.per_iou.emplace_back(iou_thresholds[ti],
                                    n_objects ? iou_sums[ti] / static_cast<double>(n_objects) : 0.0);
    }
    double total = 0.0;
    for (const auto& [id, ap] : report.per_object) {
        total += ap;
    }
    report.mean_ap = n_objects ? total / static_cast<double>(n_objects) : 0.0;
    return report;
}

inline nlohmann::ordered_json gt_to_json(std::span<const GroundTruthAnnotation> gts) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& g : gts) {
        nlohmann::ordered_json j;
        j["scene_id"] = g.scene_id;
        j["image_id"] = g.image_id;
        j["object_id"] = g.object_id;
        j["mask"] = rle_to_json(g.mask);
        j["ignore"] = g.ignore;
        arr.push_back(std::move(j));
    }
    return arr;
}

inline std::vector<GroundTruthAnnotation> gt_from_json(const nlohmann::json& j) {
    if (!j.is_array()) {
        throw InvalidInput("ground-truth file must hold a JSON array");
    }
    std::vector<GroundTruthAnnotation> out;
    try {
        for (const auto& e : j) {
            GroundTruthAnnotation g;
            g.scene_id = e.at("scene_id").get<std::int64_t>();
            g.image_id = e.at("image_id").get<std::int64_t>();
            g.object_id = e.at("object_id").get<ObjectId>();
            g.mask = rle_from_json(e.at("mask"));
            g.ignore = e.value("ignore", false);
            out.push_back(std::move(g));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("ground-truth schema error: ") + e.what());
    }
    return out;
}

inline void write_ground_truth(const std::filesystem::path& path, std::span<const GroundTruthAnnotation> gts) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << gt_to_json(gts).dump();
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

inline std::vector<GroundTruthAnnotation> read_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read ground truth: " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput("ground-truth file is not valid JSON: " + std::string(e.what()));
    }
    return gt_from_json(j);
}

inline std::string format_threshold(double t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", t);
    return buf;
}

inline nlohmann::ordered_json report_to_json(const ApReport& r) {
    nlohmann::ordered_json j;
    j["mean_ap"] = r.mean_ap;
    j["per_object"] = nlohmann::ordered_json::object();
    for (const auto& [id, ap] : r.per_object) {
        j["per_object"][std::to_string(id)] = ap;
    }
    j["per_iou"] = nlohmann::ordered_json::object();
    for (const auto& [t, ap] : r.per_iou) {
        j["per_iou"][format_threshold(t)] = ap;
    }
    return j;
}

inline ApReport evaluate_dataset(const std::filesystem::path& results_path, const std::filesystem::path& gt_path,
                                 std::span<const double> iou_thresholds = {}) {
    const auto dets = read_results(results_path);
    const auto gts = read_ground_truth(gt_path);
    std::set<ObjectId> known;
    for (const auto& g : gts) {
        known.insert(g.object_id);
    }
    for (const auto& d : dets) {
        if (!known.count(d.object_id)) {
            throw InvalidInput("unknown object_id in results: " + std::to_string(d.object_id));
        }
    }
    if (iou_thresholds.empty()) {
        const auto defaults = bop_iou_thresholds();
        return average_precision(dets, gts, defaults);
    }
    return average_precision(dets, gts, iou_thresholds);
}

} // namespace noctis
