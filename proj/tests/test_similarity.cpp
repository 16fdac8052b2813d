#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "noctis/similarity.hpp"
#include "noctis/testing/reference_oracle.hpp"
#include "test_support.hpp"

using namespace noctis;

namespace {

using V = std::vector<float>;

double cos_of(const V& a, const V& b) { return cosine_similarity(a, b); }

} // namespace

TEST(Cosine, SpotValues) {
    EXPECT_NEAR(cos_of({1, 0, 0}, {2, 0, 0}), 1.0, 1e-12);
    EXPECT_NEAR(cos_of({1, 0}, {0, 1}), 0.0, 1e-12);
    EXPECT_NEAR(cos_of({1, 2, 3}, {-1, -2, -3}), -1.0, 1e-12);
}

TEST(Cosine, Errors) {
    EXPECT_THROW(cos_of({0, 0, 0}, {1, 0, 0}), InvalidInput);
    EXPECT_THROW(cos_of({1, 0}, {1, 0, 0}), InvalidInput);
}

TEST(Cosine, SymmetricScaleInvariantBounded) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<float> scale(0.01f, 100.0f);
    for (int trial = 0; trial < 500; ++trial) {
        const auto dim = std::uniform_int_distribution<std::size_t>(1, 300)(rng);
        const auto a = test::random_vector(rng, dim), b = test::random_vector(rng, dim);
        const double ab = cos_of(a, b);
        ASSERT_EQ(ab, cos_of(b, a));
        ASSERT_GE(ab, -1.0 - 1e-6);
        ASSERT_LE(ab, 1.0 + 1e-6);
        auto a2 = a;
        const float s = scale(rng);
        for (auto& x : a2) {
            x *= s;
        }
        ASSERT_NEAR(cos_of(a2, b), ab, 1e-5);
        ASSERT_NEAR(ab, noctis::testing::naive_cosine(a, b), 1e-9);
    }
}

TEST(PairwiseSimilarity, OrthonormalIdentity) {
    const GridShape g{2, 2};
    const auto d = test::make_descriptor(
        g, {{{0, 0}, {1, 0, 0, 0}}, {{0, 1}, {0, 1, 0, 0}}, {{1, 0}, {0, 0, 1, 0}}, {{1, 1}, {0, 0, 0, 1}}});
    const auto m = pairwise_patch_similarity(d, d);
    ASSERT_EQ(m.rows, 4u);
    ASSERT_EQ(m.cols, 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_EQ(m.at(i, j), i == j ? 1.0 : 0.0);
        }
    }
}

TEST(PairwiseSimilarity, ShapeFollowsValidCounts) {
    const GridShape g{2, 2};
    const auto a = test::make_descriptor(g, {{{1, 1}, {1, 2}}});
    const auto b = test::make_descriptor(g, {{{0, 0}, {1, 0}}, {{0, 1}, {0, 1}}, {{1, 0}, {1, 1}}});
    const auto m = pairwise_patch_similarity(a, b);
    EXPECT_EQ(m.rows, 1u);
    EXPECT_EQ(m.cols, 3u);
    EXPECT_EQ(m.row_positions[0].row, 1);
    EXPECT_EQ(m.col_positions[2].row, 1);
    EXPECT_EQ(m.col_positions[2].col, 0);
}

TEST(PairwiseSimilarity, MatchesNaiveLoop) {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 50; ++trial) {
        const GridShape g{16, 16};
        const auto dim = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
        const auto a = test::random_descriptor(rng, g, dim, 256);
        const auto b = test::random_descriptor(rng, g, dim, 256);
        const auto m = pairwise_patch_similarity(a, b);
        const auto ca = a.valid_cells(), cb = b.valid_cells();
        ASSERT_EQ(m.rows, ca.size());
        ASSERT_EQ(m.cols, cb.size());
        for (std::size_t i = 0; i < m.rows; ++i) {
            for (std::size_t j = 0; j < m.cols; ++j) {
                ASSERT_NEAR(m.at(i, j), noctis::testing::naive_cosine(a.patch(ca[i]), b.patch(cb[j])), 1e-5);
            }
        }
    }
}

TEST(PairwiseSimilarity, ZeroValidPatchIsRejected) {
    const GridShape g{1, 2};
    auto d = test::make_descriptor(g, {{{0, 0}, {0, 0}}, {{0, 1}, {1, 0}}}, {1, 0});
    EXPECT_THROW(pairwise_patch_similarity(d, d), InvalidInput);
}

TEST(BestMatch, LowestIndexWins) {
    EXPECT_EQ(best_match_index(std::vector<double>{0.1, 0.9, 0.3}), 1u);
    EXPECT_EQ(best_match_index(std::vector<double>{0.5, 0.5}), 0u);
    EXPECT_THROW(best_match_index(std::vector<double>{}), InvalidInput);
}

TEST(CyclicDistance, IdenticalDescriptorsRoundTripToSelf) {
    std::mt19937_64 rng(23);
    const auto d = test::random_descriptor(rng, {6, 6}, 8, 36);
    const auto m = cyclic_distance_map(d, d);
    for (double c : m.cdist) {
        EXPECT_EQ(c, 0.0);
    }
}

// 2x2 grids with hand-picked embeddings, cross-checked against the brute-force oracle.
TEST(CyclicDistance, TwoByTwoAdjacentRoundTrip) {
    const GridShape g{2, 2};
    // crop (0,0) and (0,1) both point at the single template patch t;
    // t's best crop patch is (0,1), so (0,0) travels distance 1.
    const auto crop = test::make_descriptor(g, {{{0, 0}, {1, 0.5f}}, {{0, 1}, {1, 0}}});
    const auto tmpl = test::make_descriptor(g, {{{1, 1}, {1, 0}}});
    const auto m = cyclic_distance_map(crop, tmpl);
    const auto oracle = noctis::testing::naive_cyclic_distance(crop, tmpl);
    ASSERT_EQ(m.cdist.size(), 2u);
    EXPECT_EQ(m.cdist, oracle.cdist);
    EXPECT_EQ(m.cdist[0], 1.0);
    EXPECT_EQ(m.cdist[1], 0.0);
}

TEST(CyclicDistance, TwoByTwoDiagonalRoundTrip) {
    const GridShape g{2, 2};
    const auto crop = test::make_descriptor(g, {{{0, 0}, {1, 0.5f}}, {{1, 1}, {1, 0}}});
    const auto tmpl = test::make_descriptor(g, {{{0, 0}, {1, 0}}});
    const auto m = cyclic_distance_map(crop, tmpl);
    EXPECT_EQ(m.cdist, noctis::testing::naive_cyclic_distance(crop, tmpl).cdist);
    EXPECT_DOUBLE_EQ(m.cdist[0], std::sqrt(2.0));
    EXPECT_EQ(m.roundtrip_in_a[0], 1u);
}

TEST(CyclicDistance, TiesResolveToLowestIndex) {
    const GridShape g{2, 2};
    // two identical template patches and two identical crop patches
    const auto crop = test::make_descriptor(g, {{{0, 1}, {1, 1}}, {{1, 1}, {1, 1}}});
    const auto tmpl = test::make_descriptor(g, {{{0, 0}, {2, 2}}, {{1, 0}, {2, 2}}});
    const auto m = cyclic_distance_map(crop, tmpl);
    EXPECT_EQ(m.best_match_in_b, (std::vector<std::size_t>{0, 0}));
    EXPECT_EQ(m.roundtrip_in_a, (std::vector<std::size_t>{0, 0}));
    EXPECT_EQ(m.cdist, (std::vector<double>{0.0, 1.0}));
}

TEST(CyclicDistance, MatchesBruteForce) {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 300; ++trial) {
        const int side = std::uniform_int_distribution<int>(1, 8)(rng);
        const GridShape g{side, side};
        const auto dim = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
        const auto crop = test::random_descriptor(rng, g, dim, g.cells());
        const auto tmpl = test::random_descriptor(rng, g, dim, g.cells());
        const auto m = cyclic_distance_map(crop, tmpl);
        const auto o = noctis::testing::naive_cyclic_distance(crop, tmpl);
        ASSERT_EQ(m.best_match_in_b, o.best_match_in_b);
        ASSERT_EQ(m.roundtrip_in_a, o.roundtrip_in_a);
        ASSERT_EQ(m.cdist, o.cdist);
    }
}

TEST(CyclicDistance, BoundedByGridDiagonal) {
    std::mt19937_64 rng(25);
    for (int trial = 0; trial < 100; ++trial) {
        const GridShape g{5, 9};
        const auto crop = test::random_descriptor(rng, g, 6, g.cells());
        const auto tmpl = test::random_descriptor(rng, g, 6, g.cells());
        for (double c : cyclic_distance_map(crop, tmpl).cdist) {
            ASSERT_GE(c, 0.0);
            ASSERT_LE(c, g.diagonal());
        }
    }
}

TEST(PatchFilter, SpotValues) {
    CyclicDistanceMap m;
    m.cdist = {0.0, 3.0, 7.0};
    EXPECT_EQ(patch_filter_flags(m, 5.0), (std::vector<bool>{true, true, false}));
    EXPECT_EQ(patch_filter_flags(m, 0.0), (std::vector<bool>{true, false, false}));
    // inclusive boundary
    EXPECT_EQ(patch_filter_flags(m, 7.0), (std::vector<bool>{true, true, true}));
    EXPECT_THROW(patch_filter_flags(m, -1.0), InvalidInput);
}

TEST(PatchFilter, MonotoneInDelta) {
    std::mt19937_64 rng(26);
    std::uniform_real_distribution<double> u(0.0, 25.0);
    for (int trial = 0; trial < 200; ++trial) {
        CyclicDistanceMap m;
        for (int i = 0; i < 20; ++i) {
            m.cdist.push_back(std::min(std::floor(u(rng)), GridShape{16, 16}.diagonal()));
        }
        double d1 = u(rng), d2 = u(rng);
        if (d1 > d2) {
            std::swap(d1, d2);
        }
        const auto f1 = patch_filter_flags(m, d1), f2 = patch_filter_flags(m, d2);
        for (std::size_t i = 0; i < f1.size(); ++i) {
            ASSERT_TRUE(!f1[i] || f2[i]);
        }
        const auto all = patch_filter_flags(m, GridShape{16, 16}.diagonal());
        for (bool b : all) {
            ASSERT_TRUE(b);
        }
    }
}
