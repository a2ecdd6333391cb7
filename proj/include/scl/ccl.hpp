#pragma once

// Connected-component labeling, 8-connectivity.
//
// label_components_bbdt is a two-pass block-based labeler in the style of
// Grana et al. (2010): the first pass visits 2x2 blocks, and a decision tree
// over the neighbouring blocks P (up-left), Q (up), R (up-right) and S (left)
// picks a provisional label and records equivalences in a union-find. The
// second pass writes resolved labels to every foreground pixel of each block.
//
// label_components_floodfill is the BFS oracle. Both return canonical maps,
// so they can be compared with operator==.

#include <algorithm>
#include <cstdint>
#include <queue>
#include <vector>

#include "scl/mask.hpp"

namespace scl {

/// Disjoint sets over provisional labels, with path compression. Label 0 is
/// reserved for background and is its own root.
class UnionFind {
 public:
  UnionFind() : parents_{0} {}
  explicit UnionFind(std::size_t reserve) : parents_{0} { parents_.reserve(reserve + 1); }

  std::int32_t make_label() {
    const auto l = static_cast<std::int32_t>(parents_.size());
    parents_.push_back(l);
    return l;
  }

  std::int32_t find(std::int32_t x) {
    std::int32_t root = x;
    while (parents_[root] != root) root = parents_[root];
    while (parents_[x] != root) {
      const auto next = parents_[x];
      parents_[x] = root;
      x = next;
    }
    return root;
  }

  /// Merges the sets of a and b; the smaller root wins so that roots stay the
  /// earliest-created label of their set.
  std::int32_t unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (a < b) {
      parents_[b] = a;
      return a;
    }
    parents_[a] = b;
    return b;
  }

  /// Number of provisional labels issued (excluding background).
  std::size_t size() const noexcept { return parents_.size() - 1; }

  /// Maps every provisional label to a dense final id 1..K (roots numbered
  /// in creation order). Returns K.
  std::int32_t flatten(std::vector<std::int32_t>& out) {
    out.assign(parents_.size(), 0);
    std::int32_t k = 0;
    for (std::size_t i = 1; i < parents_.size(); ++i) {
      const auto r = find(static_cast<std::int32_t>(i));
      out[i] = (r == static_cast<std::int32_t>(i)) ? ++k : out[r];
    }
    return k;
  }

 private:
  std::vector<std::int32_t> parents_;
};

struct BoundingBox {
  int min_x = 0;
  int min_y = 0;
  int max_x = 0;
  int max_y = 0;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct ComponentStats {
  std::int32_t id = 0;
  std::size_t area = 0;
  BoundingBox bbox;
  friend bool operator==(const ComponentStats&, const ComponentStats&) = default;
};

namespace detail {

// Zero-padded copy of a mask with a 2-pixel border, so the block decision
// tree can read every neighbour without bounds checks.
class PaddedMask {
 public:
  static constexpr int kPad = 2;

  explicit PaddedMask(const BinaryMask& m)
      : stride_(m.width() + 2 * kPad + 1),
        bits_(static_cast<std::size_t>(stride_) * (m.height() + 2 * kPad + 1), 0) {
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) bits_[at(x, y)] = m.fg(x, y) ? 1 : 0;
    }
  }

  bool operator()(int x, int y) const { return bits_[at(x, y)] != 0; }

 private:
  std::size_t at(int x, int y) const {
    return static_cast<std::size_t>(y + kPad) * stride_ + (x + kPad);
  }

  int stride_;
  std::vector<std::uint8_t> bits_;
};

}  // namespace detail

/// Block-based decision-tree labeling.
inline LabelMap label_components_bbdt(const BinaryMask& m) {
  const int w = m.width();
  const int h = m.height();
  const int bw = (w + 1) / 2;
  const int bh = (h + 1) / 2;
  const detail::PaddedMask px(m);

  // Provisional label of each block, 0 when the block has no foreground.
  std::vector<std::int32_t> blocks(static_cast<std::size_t>(bw) * bh, 0);
  auto block = [&](int bx, int by) -> std::int32_t {
    if (bx < 0 || by < 0 || bx >= bw) return 0;
    return blocks[static_cast<std::size_t>(by) * bw + bx];
  };
  UnionFind uf(blocks.size() / 2 + 1);

  for (int by = 0; by < bh; ++by) {
    const int y = 2 * by;
    for (int bx = 0; bx < bw; ++bx) {
      const int x = 2 * bx;
      // Pixel naming of the 6x4 neighbourhood:
      //   a b | c d | e f    row y-2
      //   g h | i j | k l    row y-1
      //   m n | o p          row y
      //   q r | s t          row y+1
      const bool o = px(x, y), p = px(x + 1, y), s = px(x, y + 1), t = px(x + 1, y + 1);
      if (!(o || p || s || t)) continue;

      const bool b = px(x - 1, y - 2), c = px(x, y - 2);
      const bool d = px(x + 1, y - 2), e = px(x + 2, y - 2);
      const bool h_ = px(x - 1, y - 1), i = px(x, y - 1), j = px(x + 1, y - 1);
      const bool k = px(x + 2, y - 1);
      const bool g = px(x - 2, y - 1), m_ = px(x - 2, y);
      const bool n = px(x - 1, y), r = px(x - 1, y + 1);

      const bool to_q = (i || j) && (o || p);
      const bool to_p = h_ && o;
      const bool to_r = k && p;
      const bool to_s = (n || r) && (o || s);

      std::int32_t label = 0;
      auto take = [&](std::int32_t other) {
        label = label == 0 ? other : uf.unite(label, other);
      };

      if (to_q) {
        // Q reaches X; P, R and S only need merging when not already
        // joined to Q through the previous rows.
        take(block(bx, by - 1));
        const bool p_joined_q = (b || h_) && (c || i);
        const bool q_joined_r = (d || j) && (e || k);
        const bool s_joined_q = n && i;
        if (to_p && !p_joined_q) take(block(bx - 1, by - 1));
        if (to_r && !q_joined_r) take(block(bx + 1, by - 1));
        if (to_s && !s_joined_q) take(block(bx - 1, by));
      } else if (to_s) {
        take(block(bx - 1, by));
        // S sits directly below P.
        const bool s_joined_p = (g || h_) && (m_ || n);
        if (to_p && !s_joined_p) take(block(bx - 1, by - 1));
        if (to_r) take(block(bx + 1, by - 1));
      } else if (to_p) {
        take(block(bx - 1, by - 1));
        if (to_r) take(block(bx + 1, by - 1));
      } else if (to_r) {
        take(block(bx + 1, by - 1));
      } else {
        label = uf.make_label();
      }
      blocks[static_cast<std::size_t>(by) * bw + bx] = label;
    }
  }

  std::vector<std::int32_t> resolved;
  uf.flatten(resolved);

  std::vector<std::int32_t> out(m.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m.fg(x, y)) continue;
      out[m.index(x, y)] = resolved[block(x / 2, y / 2)];
    }
  }
  // Final ids follow block creation order, which is not always raster order
  // of first pixels (a block's lower-left pixel can precede another block's
  // pixels on the next row); canonicalize settles that.
  return canonicalize(LabelMap(w, h, std::move(out)));
}

/// Breadth-first flood fill seeded in raster order; canonical by construction.
inline LabelMap label_components_floodfill(const BinaryMask& m) {
  const int w = m.width();
  const int h = m.height();
  std::vector<std::int32_t> out(m.size(), 0);
  std::int32_t next = 0;
  std::queue<std::pair<int, int>> frontier;

  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      if (!m.fg(x0, y0) || out[m.index(x0, y0)] != 0) continue;
      const std::int32_t label = ++next;
      out[m.index(x0, y0)] = label;
      frontier.emplace(x0, y0);
      while (!frontier.empty()) {
        const auto [x, y] = frontier.front();
        frontier.pop();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const auto idx = m.index(nx, ny);
            if (!m.fg(idx) || out[idx] != 0) continue;
            out[idx] = label;
            frontier.emplace(nx, ny);
          }
        }
      }
    }
  }
  return LabelMap(w, h, std::move(out));
}

/// One entry per component id 1..K, in id order.
inline std::vector<ComponentStats> component_stats(const LabelMap& lm) {
  std::vector<ComponentStats> stats(static_cast<std::size_t>(lm.num_components()));
  for (std::size_t i = 0; i < stats.size(); ++i) {
    stats[i].id = static_cast<std::int32_t>(i + 1);
    stats[i].bbox = {lm.width(), lm.height(), -1, -1};
  }
  for (int y = 0; y < lm.height(); ++y) {
    for (int x = 0; x < lm.width(); ++x) {
      const auto l = lm(x, y);
      if (l == 0) continue;
      auto& s = stats[static_cast<std::size_t>(l - 1)];
      ++s.area;
      s.bbox.min_x = std::min(s.bbox.min_x, x);
      s.bbox.min_y = std::min(s.bbox.min_y, y);
      s.bbox.max_x = std::max(s.bbox.max_x, x);
      s.bbox.max_y = std::max(s.bbox.max_y, y);
    }
  }
  return stats;
}

}  // namespace scl
