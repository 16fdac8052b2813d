#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "noctis/evaluation.hpp"
#include "noctis/testing/reference_oracle.hpp"
#include "test_support.hpp"

using namespace noctis;

namespace {

DetectionResult det(ObjectId object, double score, RleMask mask, std::int64_t scene = 0) {
    DetectionResult d;
    d.scene_id = scene;
    d.object_id = object;
    d.score = score;
    d.mask = std::move(mask);
    return d;
}

GroundTruthAnnotation gt(ObjectId object, RleMask mask, std::int64_t scene = 0, bool ignore = false) {
    return {scene, 0, object, std::move(mask), ignore};
}

// Per-threshold brute force for one detection against one GT: AP is 1 at
// thresholds the IoU reaches and 0 elsewhere.
double single_pair_ap(double iou) {
    int hits = 0;
    for (double t : bop_iou_thresholds()) {
        hits += iou >= t ? 1 : 0;
    }
    return hits / 10.0;
}

} // namespace

TEST(Thresholds, TenStepsFromHalf) {
    const auto t = bop_iou_thresholds();
    ASSERT_EQ(t.size(), 10u);
    EXPECT_EQ(t.front(), 0.5);
    EXPECT_EQ(t[4], 0.7);
    EXPECT_EQ(t.back(), 0.95);
}

TEST(AveragePrecision, PerfectPrediction) {
    const auto m = test::rect_mask(8, 8, 1, 1, 3, 3);
    const std::vector<DetectionResult> d{det(1, 0.9, m)};
    const std::vector<GroundTruthAnnotation> g{gt(1, m)};
    EXPECT_DOUBLE_EQ(average_precision(d, g, bop_iou_thresholds()).mean_ap, 1.0);
}

TEST(AveragePrecision, NoDetections) {
    const std::vector<GroundTruthAnnotation> g{gt(1, test::rect_mask(8, 8, 1, 1, 3, 3))};
    const auto r = average_precision({}, g, bop_iou_thresholds());
    EXPECT_EQ(r.mean_ap, 0.0);
    EXPECT_EQ(r.per_object.at(1), 0.0);
}

TEST(AveragePrecision, SingleDetectionAtIou070) {
    // GT covers 10 pixels, the detection 7 of them.
    const auto g_mask = test::rect_mask(1, 10, 0, 0, 10, 1);
    const auto d_mask = test::rect_mask(1, 10, 0, 0, 7, 1);
    ASSERT_EQ(mask_iou(g_mask, d_mask), 0.7);
    const std::vector<DetectionResult> d{det(1, 0.5, d_mask)};
    const std::vector<GroundTruthAnnotation> g{gt(1, g_mask)};
    const auto r = average_precision(d, g, bop_iou_thresholds());
    EXPECT_NEAR(r.mean_ap, single_pair_ap(0.7), 1e-12);
    EXPECT_NEAR(r.mean_ap, 0.5, 1e-12);
    ASSERT_EQ(r.per_iou.size(), 10u);
    EXPECT_EQ(r.per_iou[4].second, 1.0);
    EXPECT_EQ(r.per_iou[5].second, 0.0);
}

TEST(AveragePrecision, RejectsBadThresholds) {
    EXPECT_THROW(average_precision({}, {}, std::vector<double>{}), InvalidInput);
    EXPECT_THROW(average_precision({}, {}, std::vector<double>{0.0}), InvalidInput);
    EXPECT_THROW(average_precision({}, {}, std::vector<double>{1.5}), InvalidInput);
}

TEST(AveragePrecision, IgnoredGroundTruthIsNeutral) {
    const auto a = test::rect_mask(8, 8, 0, 0, 3, 3);
    const auto b = test::rect_mask(8, 8, 4, 4, 3, 3);
    const std::vector<GroundTruthAnnotation> g{gt(1, a), gt(1, b, 0, true)};
    const std::vector<DetectionResult> d{det(1, 0.9, b), det(1, 0.8, b), det(1, 0.7, a)};
    // detections on the ignored GT count as neither TP nor FP
    EXPECT_DOUBLE_EQ(average_precision(d, g, bop_iou_thresholds()).mean_ap, 1.0);
    EXPECT_NEAR(average_precision(d, g, bop_iou_thresholds()).mean_ap,
                noctis::testing::naive_ap(d, g, bop_iou_thresholds()), 1e-12);
}

TEST(AveragePrecision, MatchesNaiveOracle) {
    std::mt19937_64 rng(51);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> pos(0, 6), len(1, 5), count(0, 6), obj(1, 3), scene(0, 1);
    const auto thresholds = bop_iou_thresholds();
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<GroundTruthAnnotation> g;
        std::vector<DetectionResult> d;
        const int ng = count(rng), nd = count(rng) * 2;
        for (int i = 0; i < ng; ++i) {
            g.push_back(gt(obj(rng), test::rect_mask(12, 12, pos(rng), pos(rng), len(rng), len(rng)), scene(rng),
                           u(rng) < 0.15));
        }
        for (int i = 0; i < nd; ++i) {
            RleMask m;
            if (!g.empty() && u(rng) < 0.6) {
                // jitter a GT box so IoUs spread over the threshold range
                const auto& src = g[static_cast<std::size_t>(i) % g.size()];
                const auto box = rle_decode(src.mask);
                int x0 = 12, y0 = 12, x1 = -1, y1 = -1;
                for (int r = 0; r < 12; ++r) {
                    for (int c = 0; c < 12; ++c) {
                        if (box.at(r, c)) {
                            x0 = std::min(x0, c);
                            y0 = std::min(y0, r);
                            x1 = std::max(x1, c);
                            y1 = std::max(y1, r);
                        }
                    }
                }
                const int w = std::max(1, x1 - x0 + 1 + std::uniform_int_distribution<int>(-1, 1)(rng));
                m = test::rect_mask(12, 12, x0, y0, std::min(w, 12 - x0), y1 - y0 + 1);
                d.push_back(det(src.object_id, std::round(u(rng) * 10) / 10, m, src.scene_id));
            } else {
                m = test::rect_mask(12, 12, pos(rng), pos(rng), len(rng), len(rng));
                d.push_back(det(obj(rng), std::round(u(rng) * 10) / 10, m, scene(rng)));
            }
        }
        const double fast = average_precision(d, g, thresholds).mean_ap;
        const double slow = noctis::testing::naive_ap(d, g, thresholds);
        ASSERT_NEAR(fast, slow, 1e-9) << "trial " << trial;
    }
}

TEST(AveragePrecision, AddingLowestScoringFalsePositiveNeverHelps) {
    std::mt19937_64 rng(52);
    std::uniform_int_distribution<int> pos(0, 6), len(1, 5);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<GroundTruthAnnotation> g;
        std::vector<DetectionResult> d;
        for (int i = 0; i < 4; ++i) {
            const auto m = test::rect_mask(12, 12, pos(rng), pos(rng), len(rng), len(rng));
            g.push_back(gt(1, m));
            d.push_back(det(1, u(rng), u(rng) < 0.5 ? m : test::rect_mask(12, 12, pos(rng), pos(rng), 2, 2)));
        }
        const double before = average_precision(d, g, bop_iou_thresholds()).mean_ap;
        // a distinct scene guarantees no match
        d.push_back(det(1, 0.01, test::rect_mask(12, 12, 0, 0, 1, 1), 99));
        ASSERT_LE(average_precision(d, g, bop_iou_thresholds()).mean_ap, before + 1e-12);
    }
}

TEST(AveragePrecision, MonotoneInThreshold) {
    std::mt19937_64 rng(53);
    std::uniform_int_distribution<int> pos(0, 6), len(1, 5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<GroundTruthAnnotation> g;
        std::vector<DetectionResult> d;
        for (int i = 0; i < 5; ++i) {
            g.push_back(gt(1, test::rect_mask(12, 12, pos(rng), pos(rng), len(rng), len(rng))));
            d.push_back(det(1, u(rng), test::rect_mask(12, 12, pos(rng), pos(rng), len(rng), len(rng))));
        }
        double prev = 2.0;
        for (double t : bop_iou_thresholds()) {
            const double ap = average_precision(d, g, std::vector<double>{t}).mean_ap;
            ASSERT_LE(ap, prev + 1e-12);
            prev = ap;
        }
    }
}

TEST(EvaluateDataset, GroundTruthVerbatimAndEmpty) {
    test::TempDir dir;
    const auto m1 = test::rect_mask(6, 6, 0, 0, 2, 2), m2 = test::rect_mask(6, 6, 3, 3, 2, 2);
    const std::vector<GroundTruthAnnotation> g{gt(1, m1), gt(2, m2)};
    write_ground_truth(dir / "gt.json", g);
    const std::vector<DetectionResult> d{det(1, 1.0, m1), det(2, 1.0, m2)};
    write_results(dir / "res.json", d);
    const auto r = evaluate_dataset(dir / "res.json", dir / "gt.json");
    EXPECT_EQ(r.mean_ap, 1.0);
    EXPECT_EQ(r.per_object.size(), 2u);

    std::ofstream(dir / "empty.json") << "[]";
    EXPECT_EQ(evaluate_dataset(dir / "empty.json", dir / "gt.json").mean_ap, 0.0);
    std::ofstream(dir / "blank.json") << "\n";
    EXPECT_EQ(evaluate_dataset(dir / "blank.json", dir / "gt.json").mean_ap, 0.0);
}

TEST(EvaluateDataset, UnknownObjectId) {
    test::TempDir dir;
    const auto m = test::rect_mask(6, 6, 0, 0, 2, 2);
    write_ground_truth(dir / "gt.json", std::vector<GroundTruthAnnotation>{gt(1, m)});
    write_results(dir / "res.json", std::vector<DetectionResult>{det(3, 1.0, m)});
    try {
        evaluate_dataset(dir / "res.json", dir / "gt.json");
        FAIL() << "expected an exception";
    } catch (const InvalidInput& e) {
        EXPECT_NE(std::string(e.what()).find("unknown object_id in results: 3"), std::string::npos);
    }
}

TEST(EvaluateDataset, GroundTruthRoundTripAndReportShape) {
    test::TempDir dir;
    const std::vector<GroundTruthAnnotation> g{gt(4, test::rect_mask(5, 5, 0, 0, 2, 2), 1, true),
                                               gt(2, test::rect_mask(5, 5, 1, 1, 2, 2), 0)};
    write_ground_truth(dir / "gt.json", g);
    EXPECT_EQ(read_ground_truth(dir / "gt.json"), g);

    ApReport r;
    r.mean_ap = 0.25;
    r.per_object[2] = 0.25;
    r.per_iou = {{0.5, 0.5}, {0.55, 0.0}};
    EXPECT_EQ(report_to_json(r).dump(), R"({"mean_ap":0.25,"per_object":{"2":0.25},"per_iou":{"0.50":0.5,"0.55":0.0}})");
}
