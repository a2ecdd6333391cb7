#include <gtest/gtest.h>

#include <random>

#include "scl/metrics.hpp"
#include "test_support.hpp"

namespace scl {
namespace {

TEST(ConfusionTest, OneOfEachCell) {
  const auto gt = BinaryMask::from_indices(4, 1, {0, 1});
  const auto pred = BinaryMask::from_indices(4, 1, {0, 2});
  const auto cm = confusion(gt, pred);
  EXPECT_EQ(cm.tp(), 1u);
  EXPECT_EQ(cm.fn(), 1u);
  EXPECT_EQ(cm.fp(), 1u);
  EXPECT_EQ(cm.tn(), 1u);
  EXPECT_DOUBLE_EQ(miou(cm), 1.0 / 3.0);
  EXPECT_EQ(pixel_accuracy(cm), 0.5);
}

TEST(ConfusionTest, PerfectPrediction) {
  std::mt19937_64 rng(71);
  const auto m = testing::random_mask(rng, 13, 9, 0.4);
  const auto cm = confusion(m, m);
  EXPECT_EQ(miou(cm), 1.0);
  EXPECT_EQ(pixel_accuracy(cm), 1.0);
}

TEST(ConfusionTest, AbsentClassScoresOne) {
  const BinaryMask empty(3, 3);
  const auto cm = confusion(empty, empty);
  EXPECT_EQ(cm.class_iou(SegClass::kPerson), 1.0);
  EXPECT_EQ(miou(cm), 1.0);
}

TEST(ConfusionTest, CompleteMiss) {
  const BinaryMask gt(2, 2, true), pred(2, 2, false);
  const auto cm = confusion(gt, pred);
  EXPECT_EQ(cm.class_iou(SegClass::kPerson), 0.0);
  EXPECT_EQ(cm.class_iou(SegClass::kBackground), 0.0);
  EXPECT_EQ(pixel_accuracy(cm), 0.0);
}

TEST(ConfusionTest, EmptyMatrixRejected) {
  EXPECT_THROW(miou(ConfusionMatrix{}), ValidationError);
  EXPECT_THROW(pixel_accuracy(ConfusionMatrix{}), ValidationError);
}

TEST(ConfusionTest, ShapeMismatch) {
  EXPECT_THROW(confusion(BinaryMask(2, 2), BinaryMask(4, 1)), IncompatibleRaster);
}

TEST(ConfusionTest, AllTwoPixelFixtures) {
  for (unsigned g = 0; g < 4; ++g) {
    for (unsigned p = 0; p < 4; ++p) {
      BinaryMask gt(2, 1), pred(2, 1);
      for (int i = 0; i < 2; ++i) {
        gt.set(i, 0, (g >> i) & 1u);
        pred.set(i, 0, (p >> i) & 1u);
      }
      int tp = 0, tn = 0, fp = 0, fn = 0;
      for (int i = 0; i < 2; ++i) {
        const bool a = (g >> i) & 1u, b = (p >> i) & 1u;
        tp += a && b;
        tn += !a && !b;
        fp += !a && b;
        fn += a && !b;
      }
      const auto iou = [](int hit, int miss) { return hit + miss ? double(hit) / (hit + miss) : 1.0; };
      const double want = (iou(tp, fp + fn) + iou(tn, fp + fn)) / 2;
      const auto cm = confusion(gt, pred);
      EXPECT_NEAR(miou(cm), want, 1e-12) << g << "," << p;
      EXPECT_NEAR(pixel_accuracy(cm), (tp + tn) / 2.0, 1e-12);
    }
  }
}

TEST(ConfusionTest, DatasetAggregationIsPixelWeighted) {
  // Two images: per-image mIoU averages differ from the pooled matrix.
  const auto a = confusion(BinaryMask::from_indices(4, 1, {0}), BinaryMask::from_indices(4, 1, {0}));
  const auto b = confusion(BinaryMask::from_indices(4, 1, {0, 1}), BinaryMask(4, 1));
  const auto total = a + b;
  EXPECT_EQ(total.tp(), 1u);
  EXPECT_EQ(total.fn(), 2u);
  EXPECT_EQ(total.tn(), 5u);
  EXPECT_EQ(total.fp(), 0u);
  EXPECT_DOUBLE_EQ(miou(total), (1.0 / 3.0 + 5.0 / 7.0) / 2.0);
  EXPECT_EQ(pixel_accuracy(total), 6.0 / 8.0);
}

TEST(ConfusionTest, AccumulationIsAdditive) {
  std::mt19937_64 rng(73);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 1 + rng() % 20, h = 1 + rng() % 20;
    const auto g1 = testing::random_mask(rng, w, h, 0.5), p1 = testing::random_mask(rng, w, h, 0.5);
    const auto g2 = testing::random_mask(rng, w, h, 0.3), p2 = testing::random_mask(rng, w, h, 0.6);
    EXPECT_EQ(accumulate(confusion(g1, p1), g2, p2), confusion(g1, p1) + confusion(g2, p2));
    EXPECT_EQ(confusion(g1, p1).total(), static_cast<std::uint64_t>(w) * h);
    const double m = miou(confusion(g1, p1));
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
  }
}

}  // namespace
}  // namespace scl
