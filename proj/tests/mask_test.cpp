#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "scl/mask.hpp"
#include "test_support.hpp"

namespace scl {
namespace {

TEST(BinarizeTest, AllZeroMapIsBackground) {
  const ProbabilityMap p(4, 3, 0.0);
  EXPECT_EQ(mask_area(binarize(p, 0.5)), 0u);
}

TEST(BinarizeTest, ThresholdIsInclusive) {
  const ProbabilityMap p(1, 1, 0.5);
  EXPECT_TRUE(binarize(p, 0.5).fg(0));
}

TEST(BinarizeTest, ElementwiseComparison) {
  const ProbabilityMap p(2, 2, std::vector<double>{0.9, 0.4, 0.6, 0.1});
  const BinaryMask m = binarize(p, 0.5);
  EXPECT_EQ(m, BinaryMask::from_indices(2, 2, {0, 2}));
}

TEST(BinarizeTest, RejectsThresholdOutsideOpenInterval) {
  const ProbabilityMap p(2, 2, 0.3);
  EXPECT_THROW(binarize(p, 0.0), ValidationError);
  EXPECT_THROW(binarize(p, 1.0), ValidationError);
  EXPECT_THROW(binarize(p, std::nan("")), ValidationError);
}

TEST(BinarizeTest, MonotoneInProbability) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(64);
    for (auto& x : v) x = u(rng);
    const ProbabilityMap p(8, 8, v);
    const std::size_t i = rng() % 64;
    const double raised = v[i] + (1.0 - v[i]) * u(rng);
    const double t = 0.05 + 0.9 * u(rng);
    if (binarize(p, t).fg(i)) {
      EXPECT_TRUE(binarize(p.with(i, raised), t).fg(i));
    }
  }
}

TEST(ProbabilityMapTest, RejectsNonFiniteAndOutOfRange) {
  EXPECT_THROW(ProbabilityMap(1, 2, std::vector<double>{0.5, std::nan("")}), ValidationError);
  EXPECT_THROW(ProbabilityMap(1, 1, std::vector<double>{1.5}), ValidationError);
  EXPECT_THROW(ProbabilityMap(1, 1, std::vector<double>{-0.1}), ValidationError);
  EXPECT_THROW(ProbabilityMap(1, 1, std::numeric_limits<double>::infinity()), ValidationError);
}

TEST(RasterTest, RejectsBadDimensions) {
  EXPECT_THROW(BinaryMask(0, 4), ValidationError);
  EXPECT_THROW(BinaryMask(3, -1), ValidationError);
  EXPECT_THROW(BinaryMask(2, 2, std::vector<std::uint8_t>(3, 1)), ValidationError);
}

TEST(RasterTest, NonzeroBytesBecomeForeground) {
  const BinaryMask m(3, 1, std::vector<std::uint8_t>{0, 7, 255});
  EXPECT_FALSE(m.fg(0));
  EXPECT_EQ(m[1], 1);
  EXPECT_EQ(m[2], 1);
}

TEST(MaskAreaTest, Examples) {
  EXPECT_EQ(mask_area(BinaryMask(4, 4, false)), 0u);
  EXPECT_EQ(mask_area(BinaryMask(4, 4, true)), 16u);
  EXPECT_EQ(mask_area(BinaryMask::from_indices(16, 1, {0, 1, 2, 3})), 4u);
}

TEST(MaskAlgebraTest, IdentityAndIdempotence) {
  std::mt19937_64 rng(3);
  const BinaryMask a = testing::random_mask(rng, 9, 7, 0.4);
  EXPECT_EQ(mask_union(a, BinaryMask(9, 7, false)), a);
  EXPECT_EQ(mask_intersection(a, a), a);
}

TEST(MaskAlgebraTest, OverlappingRuns) {
  const auto a = BinaryMask::from_indices(8, 1, {0, 1, 2, 3});
  const auto b = BinaryMask::from_indices(8, 1, {2, 3, 4, 5});
  EXPECT_EQ(mask_union(a, b), BinaryMask::from_indices(8, 1, {0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(mask_intersection(a, b), BinaryMask::from_indices(8, 1, {2, 3}));
}

TEST(MaskAlgebraTest, DimensionMismatchIsIncompatible) {
  EXPECT_THROW(mask_union(BinaryMask(2, 3), BinaryMask(3, 2)), IncompatibleRaster);
  EXPECT_THROW(mask_intersection(BinaryMask(2, 3), BinaryMask(2, 4)), IncompatibleRaster);
}

TEST(MaskAlgebraTest, InclusionExclusion) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 40), h = 1 + static_cast<int>(rng() % 40);
    const auto a = testing::random_mask(rng, w, h, 0.1 + 0.8 * (rng() % 100) / 100.0);
    const auto b = testing::random_mask(rng, w, h, 0.1 + 0.8 * (rng() % 100) / 100.0);
    EXPECT_EQ(mask_area(mask_union(a, b)) + mask_area(mask_intersection(a, b)),
              mask_area(a) + mask_area(b));
  }
}

TEST(LabelMapTest, CanonicalizeRenumbersByFirstPixel) {
  const LabelMap lm(4, 2, std::vector<std::int32_t>{0, 7, 7, 3, 2, 0, 3, 3});
  const LabelMap c = canonicalize(lm);
  EXPECT_EQ(c, LabelMap(4, 2, std::vector<std::int32_t>{0, 1, 1, 2, 3, 0, 2, 2}));
  EXPECT_TRUE(c.is_canonical());
  EXPECT_FALSE(lm.is_canonical());
  EXPECT_EQ(c.num_components(), 3);
}

TEST(LabelMapTest, CanonicalizeIsIdentityOnCanonicalMaps) {
  const LabelMap lm(3, 2, std::vector<std::int32_t>{1, 0, 2, 1, 3, 2});
  EXPECT_EQ(canonicalize(lm), lm);
}

}  // namespace
}  // namespace scl
