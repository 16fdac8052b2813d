#include <gtest/gtest.h>

#include <random>

#include "noctis/rle.hpp"
#include "test_support.hpp"

using namespace noctis;

TEST(Rle, EncodesColumnMajorWithLeadingZeroRun) {
    BinaryMask m(2, 2);
    // column-major sequence 1,0,0,1
    m.at(0, 0) = 1;
    m.at(1, 1) = 1;
    EXPECT_EQ(rle_encode(m).counts, (std::vector<std::uint32_t>{0, 1, 2, 1}));
}

TEST(Rle, AllZeroAndAllOne) {
    EXPECT_EQ(rle_encode(BinaryMask(3, 3)).counts, (std::vector<std::uint32_t>{9}));
    BinaryMask ones(2, 2);
    std::fill(ones.pixels.begin(), ones.pixels.end(), 1);
    EXPECT_EQ(rle_encode(ones).counts, (std::vector<std::uint32_t>{0, 4}));
}

TEST(Rle, DecodeRejectsLengthMismatch) {
    RleMask bad{2, 3, {1, 2, 2}};
    try {
        rle_decode(bad);
        FAIL() << "expected an exception";
    } catch (const InvalidInput& e) {
        EXPECT_NE(std::string(e.what()).find("RLE length mismatch"), std::string::npos);
    }
}

TEST(Rle, RejectsInteriorZeroRun) {
    EXPECT_THROW(validate_rle(RleMask{1, 4, {1, 0, 3}}), InvalidInput);
    EXPECT_NO_THROW(validate_rle(RleMask{1, 4, {0, 4}}));
}

TEST(Rle, RoundTripRandomMasks) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> side(1, 64);
    std::uniform_real_distribution<double> density(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const int h = side(rng), w = side(rng);
        BinaryMask m(h, w);
        std::bernoulli_distribution on(density(rng));
        for (auto& p : m.pixels) {
            p = on(rng) ? 1 : 0;
        }
        const auto rle = rle_encode(m);
        ASSERT_NO_THROW(validate_rle(rle));
        ASSERT_EQ(rle_decode(rle), m);
        std::uint64_t area = 0;
        for (auto p : m.pixels) {
            area += p;
        }
        ASSERT_EQ(rle_area(rle), area);
    }
}

TEST(MaskIou, SpotValues) {
    const auto a = test::rect_mask(4, 4, 0, 0, 2, 2);
    EXPECT_DOUBLE_EQ(mask_iou(a, a), 1.0);
    EXPECT_DOUBLE_EQ(mask_iou(a, test::rect_mask(4, 4, 2, 2, 2, 2)), 0.0);
    // |small| = 2 inside |a| = 4
    EXPECT_DOUBLE_EQ(mask_iou(test::rect_mask(4, 4, 0, 0, 1, 2), a), 0.5);
}

TEST(MaskIou, Errors) {
    EXPECT_THROW(mask_iou(RleMask{2, 2, {4}}, RleMask{2, 2, {4}}), InvalidInput);
    EXPECT_THROW(mask_iou(RleMask{2, 2, {4}}, RleMask{2, 3, {6}}), InvalidInput);
}

TEST(MaskIou, SymmetricBoundedAndMatchesPixelCount) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = test::random_mask(rng, 17, 23, 0.4);
        const auto b = test::random_mask(rng, 17, 23, 0.3);
        const auto da = rle_decode(a), db = rle_decode(b);
        std::uint64_t inter = 0;
        for (std::size_t i = 0; i < da.pixels.size(); ++i) {
            inter += da.pixels[i] & db.pixels[i];
        }
        ASSERT_EQ(rle_intersection_area(a, b), inter);
        const double ab = mask_iou(a, b), ba = mask_iou(b, a);
        ASSERT_EQ(ab, ba);
        ASSERT_GE(ab, 0.0);
        ASSERT_LE(ab, 1.0);
    }
}

TEST(Rle, JsonShape) {
    const auto j = rle_to_json(RleMask{2, 2, {0, 1, 2, 1}});
    EXPECT_EQ(j.dump(), R"({"size":[2,2],"counts":[0,1,2,1]})");
    EXPECT_EQ(rle_from_json(j), (RleMask{2, 2, {0, 1, 2, 1}}));
    EXPECT_THROW(rle_from_json(nlohmann::json::parse(R"({"size":[2,2],"counts":[0,1,2]})")), InvalidInput);
}
