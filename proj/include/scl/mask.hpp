#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scl/errors.hpp"

namespace scl {

/// Row-major raster of `T`. Base for the mask, probability and label types;
/// it only owns storage and dimension checks, the derived types own the
/// per-pixel invariants.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;

  Raster(int width, int height, T fill = T{}) : width_(width), height_(height) {
    check_dims(width, height);
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  Raster(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * height) {
      throw ValidationError("raster data length " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(width) + "x" +
                            std::to_string(height));
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  const T& operator()(int x, int y) const { return data_[index(x, y)]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<const T> data() const noexcept { return data_; }

  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  bool same_shape(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 protected:
  T& mut(std::size_t i) { return data_[i]; }
  std::vector<T>& mut_data() { return data_; }

 private:
  static void check_dims(int width, int height) {
    if (width < 1 || height < 1) {
      throw ValidationError("raster dimensions must be >= 1, got " +
                            std::to_string(width) + "x" + std::to_string(height));
    }
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* what) {
  if (!a.same_shape(b)) {
    throw IncompatibleRaster(std::string(what) + ": " + std::to_string(a.width()) + "x" +
                             std::to_string(a.height()) + " vs " +
                             std::to_string(b.width()) + "x" + std::to_string(b.height()));
  }
}

/// Foreground/background raster. Stored as one byte per pixel, 0 or 1.
class BinaryMask : public Raster<std::uint8_t> {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false)
      : Raster(width, height, fill ? 1 : 0) {}

  /// Any nonzero byte is foreground.
  BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
      : Raster(width, height, std::move(bits)) {
    for (auto& b : mut_data()) b = b ? 1 : 0;
  }

  static BinaryMask from_indices(int width, int height, std::initializer_list<int> fg) {
    BinaryMask m(width, height);
    for (int i : fg) m.set(static_cast<std::size_t>(i), true);
    return m;
  }

  bool fg(int x, int y) const { return (*this)(x, y) != 0; }
  bool fg(std::size_t i) const { return (*this)[i] != 0; }

  void set(std::size_t i, bool v) { mut(i) = v ? 1 : 0; }
  void set(int x, int y, bool v) { mut(index(x, y)) = v ? 1 : 0; }
};

/// Per-pixel foreground probability, every value finite and in [0, 1].
class ProbabilityMap : public Raster<double> {
 public:
  ProbabilityMap() = default;
  ProbabilityMap(int width, int height, double fill = 0.0)
      : Raster(width, height, fill) {
    check_value(fill, 0);
  }
  ProbabilityMap(int width, int height, std::vector<double> probs)
      : Raster(width, height, std::move(probs)) {
    for (std::size_t i = 0; i < size(); ++i) check_value((*this)[i], i);
  }

  static ProbabilityMap from_mask(const BinaryMask& m) {
    std::vector<double> v(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) v[i] = m.fg(i) ? 1.0 : 0.0;
    return ProbabilityMap(m.width(), m.height(), std::move(v));
  }

  /// Copy with one pixel replaced; used by finite-difference checks.
  ProbabilityMap with(std::size_t i, double value) const {
    ProbabilityMap out = *this;
    check_value(value, i);
    out.mut(i) = value;
    return out;
  }

 private:
  static void check_value(double v, std::size_t i) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw ValidationError("probability at pixel " + std::to_string(i) +
                            " is outside [0,1]: " + std::to_string(v));
    }
  }
};

/// Component-id raster: 0 is background, components are 1..K.
class LabelMap : public Raster<std::int32_t> {
 public:
  LabelMap() = default;
  LabelMap(int width, int height) : Raster(width, height, 0) {}
  LabelMap(int width, int height, std::vector<std::int32_t> labels)
      : Raster(width, height, std::move(labels)) {
    for (auto l : data()) {
      if (l < 0) throw ValidationError("negative label id");
      if (l > num_components_) num_components_ = l;
    }
  }

  /// Largest label id present; equals K for canonical maps.
  int num_components() const noexcept { return num_components_; }

  /// True when ids are dense 1..K and numbered by raster order of each
  /// component's first pixel.
  bool is_canonical() const {
    std::int32_t next = 1;
    for (auto l : data()) {
      if (l == 0 || l < next) continue;
      if (l != next) return false;
      ++next;
    }
    return next - 1 == num_components_;
  }

  friend bool operator==(const LabelMap& a, const LabelMap& b) {
    return static_cast<const Raster&>(a) == static_cast<const Raster&>(b);
  }

 private:
  int num_components_ = 0;
};

/// Renumbers labels densely in raster order of first appearance. Any
/// partition of the foreground maps to the same canonical LabelMap.
inline LabelMap canonicalize(const LabelMap& lm) {
  std::vector<std::int32_t> remap(static_cast<std::size_t>(lm.num_components()) + 1, 0);
  std::vector<std::int32_t> out(lm.size(), 0);
  std::int32_t next = 0;
  for (std::size_t i = 0; i < lm.size(); ++i) {
    const auto l = lm[i];
    if (l == 0) continue;
    if (remap[l] == 0) remap[l] = ++next;
    out[i] = remap[l];
  }
  return LabelMap(lm.width(), lm.height(), std::move(out));
}

/// Foreground iff prob >= threshold.
inline BinaryMask binarize(const ProbabilityMap& p, double threshold = 0.5) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ValidationError("binarize threshold must lie in (0,1), got " +
                          std::to_string(threshold));
  }
  std::vector<std::uint8_t> bits(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) bits[i] = p[i] >= threshold ? 1 : 0;
  return BinaryMask(p.width(), p.height(), std::move(bits));
}

inline std::size_t mask_area(const BinaryMask& m) {
  std::size_t n = 0;
  for (auto b : m.data()) n += b;
  return n;
}

namespace detail {
template <typename Op>
BinaryMask combine(const BinaryMask& a, const BinaryMask& b, Op op, const char* what) {
  require_same_shape(a, b, what);
  std::vector<std::uint8_t> bits(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) bits[i] = op(a[i], b[i]);
  return BinaryMask(a.width(), a.height(), std::move(bits));
}
}  // namespace detail

inline BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  return detail::combine(a, b, [](auto x, auto y) { return x | y; }, "mask_union");
}

inline BinaryMask mask_intersection(const BinaryMask& a, const BinaryMask& b) {
  return detail::combine(a, b, [](auto x, auto y) { return x & y; }, "mask_intersection");
}

inline BinaryMask mask_complement(const BinaryMask& m) {
  std::vector<std::uint8_t> bits(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) bits[i] = m[i] ^ 1;
  return BinaryMask(m.width(), m.height(), std::move(bits));
}

/// Pixels carrying `label` in `lm`.
inline BinaryMask component_mask(const LabelMap& lm, std::int32_t label) {
  std::vector<std::uint8_t> bits(lm.size());
  for (std::size_t i = 0; i < lm.size(); ++i) bits[i] = lm[i] == label ? 1 : 0;
  return BinaryMask(lm.width(), lm.height(), std::move(bits));
}

}  // namespace scl
