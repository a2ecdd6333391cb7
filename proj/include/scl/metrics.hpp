#pragma once

#include <array>
#include <cstdint>

#include "scl/mask.hpp"

namespace scl {

enum class SegClass : int { kBackground = 0, kPerson = 1 };

/// 2x2 pixel counts indexed [gt_class][pred_class].
class ConfusionMatrix {
 public:
  using Counts = std::array<std::array<std::uint64_t, 2>, 2>;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(const Counts& counts) : counts_(counts) {}

  std::uint64_t at(SegClass gt, SegClass pred) const {
    return counts_[static_cast<int>(gt)][static_cast<int>(pred)];
  }
  std::uint64_t tp() const { return at(SegClass::kPerson, SegClass::kPerson); }
  std::uint64_t tn() const { return at(SegClass::kBackground, SegClass::kBackground); }
  std::uint64_t fp() const { return at(SegClass::kBackground, SegClass::kPerson); }
  std::uint64_t fn() const { return at(SegClass::kPerson, SegClass::kBackground); }

  std::uint64_t total() const {
    return counts_[0][0] + counts_[0][1] + counts_[1][0] + counts_[1][1];
  }
  const Counts& counts() const { return counts_; }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    for (int g = 0; g < 2; ++g)
      for (int p = 0; p < 2; ++p) counts_[g][p] += o.counts_[g][p];
    return *this;
  }
  friend ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b) { return a += b; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

  /// IoU of one class; a class absent from both gt and pred scores 1.
  double class_iou(SegClass c) const {
    const int k = static_cast<int>(c);
    const std::uint64_t hit = counts_[k][k];
    const std::uint64_t denom = counts_[0][k] + counts_[1][k] + counts_[k][0] + counts_[k][1] - hit;
    return denom == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(denom);
  }

 private:
  friend ConfusionMatrix accumulate(ConfusionMatrix, const BinaryMask&, const BinaryMask&);
  Counts counts_{};
};

inline ConfusionMatrix accumulate(ConfusionMatrix cm, const BinaryMask& gt, const BinaryMask& pred) {
  require_same_shape(gt, pred, "accumulate");
  for (std::size_t i = 0; i < gt.size(); ++i) ++cm.counts_[gt[i]][pred[i]];
  return cm;
}

inline ConfusionMatrix confusion(const BinaryMask& gt, const BinaryMask& pred) {
  return accumulate(ConfusionMatrix{}, gt, pred);
}

namespace detail {
inline void require_nonempty(const ConfusionMatrix& cm, const char* what) {
  if (cm.total() == 0) throw ValidationError(std::string(what) + ": empty confusion matrix");
}
}  // namespace detail

inline double miou(const ConfusionMatrix& cm) {
  detail::require_nonempty(cm, "miou");
  return 0.5 * (cm.class_iou(SegClass::kBackground) + cm.class_iou(SegClass::kPerson));
}

inline double pixel_accuracy(const ConfusionMatrix& cm) {
  detail::require_nonempty(cm, "pixel_accuracy");
  return static_cast<double>(cm.tp() + cm.tn()) / static_cast<double>(cm.total());
}

}  // namespace scl
