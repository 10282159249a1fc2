#include <gtest/gtest.h>

#include <random>

#include "gelbot/geometry.hpp"
#include "oracles.hpp"

using namespace gelbot;

TEST(Intersect, IdentityDisjointAndOverlap) {
    EXPECT_EQ(intersect({0, 0, 10, 10}, {0, 0, 10, 10}), (Rect{0, 0, 10, 10}));
    EXPECT_FALSE(intersect({0, 0, 10, 10}, {20, 20, 30, 30}));
    EXPECT_EQ(intersect({0, 0, 10, 10}, {5, 0, 15, 10}), (Rect{5, 0, 10, 10}));
}

TEST(Intersect, OverlapAreaMatchesSubcellCount) {
    // Integer subcells of [0,20]^2 inside both rects.
    int inside = 0;
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) inside += (x >= 0 && x < 10 && y < 10) && (x >= 5 && x < 15 && y < 10);
    EXPECT_DOUBLE_EQ(intersection_area({0, 0, 10, 10}, {5, 0, 15, 10}), inside);
}

TEST(Intersect, EdgeContactIsEmpty) {
    EXPECT_FALSE(intersect({0, 0, 10, 10}, {10, 0, 20, 10}));
    EXPECT_FALSE(intersect({0, 0, 10, 10}, {0, 10, 10, 20}));
}

TEST(Iou, Examples) {
    EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
    EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
    EXPECT_NEAR(iou({0, 0, 10, 10}, {5, 0, 15, 10}), oracle::raster_iou({0, 0, 100, 100}, {50, 0, 150, 100}, 160),
                1e-12);
    EXPECT_NEAR(iou({0, 0, 10, 10}, {5, 0, 15, 10}), 1.0 / 3.0, 1e-12);
}

TEST(Iou, DegenerateRectsScoreZero) {
    EXPECT_EQ(iou({1, 1, 1, 1}, {1, 1, 1, 1}), 0.0);
    EXPECT_EQ(iou({0, 0, 0, 5}, {0, 0, 5, 5}), 0.0);
}

TEST(Coverage, Examples) {
    EXPECT_DOUBLE_EQ(coverage(Rect{0, 0, 100, 100}, {10, 10, 20, 20}), 1.0);
    EXPECT_DOUBLE_EQ(coverage(std::nullopt, {0, 0, 10, 10}), 0.0);
    EXPECT_NEAR(coverage(Rect{0, 0, 10, 10}, {5, 0, 15, 10}),
                oracle::raster_coverage({0, 0, 100, 100}, {50, 0, 150, 100}, 160), 1e-12);
}

TEST(Coverage, ZeroAreaRegionIsDomainError) {
    EXPECT_THROW(coverage(Rect{0, 0, 10, 10}, {3, 3, 3, 8}), std::domain_error);
    EXPECT_THROW(coverage(std::nullopt, {0, 0, 0, 0}), std::domain_error);
}

TEST(Trail, Examples) {
    const Rect bounds{0, 0, 200, 20};
    EXPECT_EQ(trail_region({45, 0, 55, 20}, Direction::Forward, 15, bounds), (Rect{30, 0, 45, 20}));
    EXPECT_FALSE(trail_region({0, 0, 10, 20}, Direction::Forward, 15, bounds));
    EXPECT_EQ(trail_region({45, 0, 55, 20}, Direction::Backward, 15, bounds), (Rect{55, 0, 70, 20}));
}

TEST(Trail, PartialClip) {
    EXPECT_EQ(trail_region({5, 0, 15, 20}, Direction::Forward, 15, {0, 0, 200, 20}), (Rect{0, 0, 5, 20}));
    EXPECT_EQ(trail_region({185, 0, 195, 20}, Direction::Backward, 15, {0, 0, 200, 20}), (Rect{195, 0, 200, 20}));
}

TEST(Trail, NonPositiveWindowRejected) {
    EXPECT_THROW(trail_region({45, 0, 55, 20}, Direction::Forward, 0, {0, 0, 200, 20}), std::invalid_argument);
    EXPECT_THROW(trail_region({45, 0, 55, 20}, Direction::Forward, -1, {0, 0, 200, 20}), std::invalid_argument);
}

TEST(GeometryProperties, RandomPairsMatchRasterOracle) {
    std::mt19937_64 rng(7);
    constexpr int extent = 120;  // 12 mm on the 0.1 mm lattice
    for (int k = 0; k < 300; ++k) {
        const auto a = oracle::random_rect(rng, extent);
        const auto b = oracle::random_rect(rng, extent);
        ASSERT_NEAR(iou(a.mm(), b.mm()), oracle::raster_iou(a, b, extent), 1e-9) << k;
        ASSERT_NEAR(coverage(a.mm(), b.mm()), oracle::raster_coverage(a, b, extent), 1e-9) << k;
    }
}

TEST(GeometryProperties, IouSymmetricBoundedAndReflexive) {
    std::mt19937_64 rng(11);
    for (int k = 0; k < 1000; ++k) {
        const Rect a = oracle::random_rect(rng, 500).mm();
        const Rect b = oracle::random_rect(rng, 500).mm();
        const double v = iou(a, b);
        ASSERT_EQ(v, iou(b, a));
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        ASSERT_DOUBLE_EQ(iou(a, a), 1.0);
        ASSERT_EQ(intersect(a, b), intersect(b, a));
        const double c = coverage(a, b);
        ASSERT_GE(c, 0.0);
        ASSERT_LE(c, 1.0);
    }
}

TEST(GeometryProperties, TrailStaysInBoundsAndOffFootprint) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> x(0.0, 190.0), len(0.5, 40.0);
    const Rect bounds{0, 0, 200, 40};
    for (int k = 0; k < 1000; ++k) {
        const double x0 = x(rng);
        const Rect fp{x0, 5, std::min(200.0, x0 + 10), 35};
        for (Direction d : {Direction::Forward, Direction::Backward}) {
            const auto t = trail_region(fp, d, len(rng), bounds);
            if (!t) continue;
            ASSERT_TRUE(bounds.contains(*t));
            ASSERT_EQ(intersection_area(*t, fp), 0.0);
            ASSERT_EQ(t->y_min, fp.y_min);
            ASSERT_EQ(t->y_max, fp.y_max);
        }
    }
}
