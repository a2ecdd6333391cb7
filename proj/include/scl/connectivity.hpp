#pragma once

// Semantic connectivity between a ground-truth and a predicted mask.
//
// Components of both masks are matched by pixel overlap: any nonzero
// intersection pairs a GT component g with a prediction component p. Each GT
// component gets a connectivity C = mean IoU over the predictions it pairs
// with (0 when it pairs with none), and every prediction component that
// overlaps no GT contributes a zero term. SC is the mean over those
// N = |GT components| + |isolated predictions| terms.
//
// The SC loss is 1 - SC when at least one pair exists, otherwise the
// area term |P u G| / |I|. sc_loss_soft evaluates the same quantity on a
// probability map with the component partition frozen at the thresholded
// prediction, and returns the exact gradient with respect to every pixel's
// probability.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "scl/ccl.hpp"
#include "scl/mask.hpp"

namespace scl {

struct PredOverlap {
  std::int32_t pred_id = 0;
  std::size_t intersection = 0;  // pixels
  friend bool operator==(const PredOverlap&, const PredOverlap&) = default;
};

/// One GT component and the prediction components it intersects.
struct GtMatch {
  std::int32_t gt_id = 0;
  std::vector<PredOverlap> preds;  // sorted by pred_id
  friend bool operator==(const GtMatch&, const GtMatch&) = default;
};

struct MatchGraph {
  std::vector<std::size_t> gt_area;    // index id-1
  std::vector<std::size_t> pred_area;  // index id-1
  std::vector<GtMatch> pairs;          // GT components with >= 1 overlap, by gt_id
  std::vector<std::int32_t> isolated_gts;
  std::vector<std::int32_t> isolated_preds;

  int num_gt() const noexcept { return static_cast<int>(gt_area.size()); }
  int num_pred() const noexcept { return static_cast<int>(pred_area.size()); }

  /// Number of (g, p) edges.
  std::size_t num_pairs() const noexcept {
    std::size_t n = 0;
    for (const auto& m : pairs) n += m.preds.size();
    return n;
  }

  /// Match entry for a GT id, or nullptr when the component is isolated.
  /// Throws for ids outside 1..num_gt().
  const GtMatch* find(std::int32_t gt_id) const {
    if (gt_id < 1 || gt_id > num_gt()) {
      throw ValidationError("unknown GT component id " + std::to_string(gt_id));
    }
    auto it = std::lower_bound(pairs.begin(), pairs.end(), gt_id,
                               [](const GtMatch& m, std::int32_t id) { return m.gt_id < id; });
    return (it != pairs.end() && it->gt_id == gt_id) ? &*it : nullptr;
  }
};

struct GtConnectivity {
  std::int32_t gt_id = 0;
  double connectivity = 0.0;
  std::vector<std::int32_t> matched_preds;
};

struct ConnectivityReport {
  std::vector<GtConnectivity> per_gt_connectivity;
  std::vector<std::int32_t> isolated_preds;
  double sc = 1.0;
  std::size_t n_terms = 0;
  double loss = 0.0;
  bool cold_start = false;
};

/// Soft loss value plus dLoss/dq per pixel.
struct SoftLossResult {
  ConnectivityReport report;
  Raster<double> grad;
};

/// Builds the overlap graph in one joint raster pass.
inline MatchGraph match_components(const LabelMap& gt, const LabelMap& pred) {
  require_same_shape(gt, pred, "match_components");
  MatchGraph g;
  g.gt_area.assign(static_cast<std::size_t>(gt.num_components()), 0);
  g.pred_area.assign(static_cast<std::size_t>(pred.num_components()), 0);

  std::unordered_map<std::uint64_t, std::size_t> overlap;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto a = gt[i];
    const auto b = pred[i];
    if (a) ++g.gt_area[a - 1];
    if (b) ++g.pred_area[b - 1];
    if (a && b) ++overlap[(static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b)];
  }

  std::vector<std::pair<std::uint64_t, std::size_t>> edges(overlap.begin(), overlap.end());
  std::sort(edges.begin(), edges.end());

  std::vector<bool> pred_matched(g.pred_area.size(), false);
  for (const auto& [key, count] : edges) {
    const auto gid = static_cast<std::int32_t>(key >> 32);
    const auto pid = static_cast<std::int32_t>(key & 0xffffffffu);
    if (g.pairs.empty() || g.pairs.back().gt_id != gid) g.pairs.push_back({gid, {}});
    g.pairs.back().preds.push_back({pid, count});
    pred_matched[pid - 1] = true;
  }

  std::size_t next = 0;
  for (std::int32_t id = 1; id <= g.num_gt(); ++id) {
    if (next < g.pairs.size() && g.pairs[next].gt_id == id) {
      ++next;
    } else {
      g.isolated_gts.push_back(id);
    }
  }
  for (std::int32_t id = 1; id <= g.num_pred(); ++id) {
    if (!pred_matched[id - 1]) g.isolated_preds.push_back(id);
  }
  return g;
}

/// |g n p| / |g u p| for two pixel sets given as masks.
inline double component_iou(const BinaryMask& g, const BinaryMask& p) {
  require_same_shape(g, p, "component_iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    inter += g[i] & p[i];
    uni += g[i] | p[i];
  }
  if (uni == 0) throw ValidationError("component_iou: both components are empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace detail {

// IoU from areas; shared by the hard and soft paths so that a binary
// probability map reproduces the hard value bit for bit.
inline double iou_from_sums(double gt_area, double pred_mass, double inter_mass) {
  return inter_mass / (gt_area + pred_mass - inter_mass);
}

template <typename EdgeIoU>
ConnectivityReport aggregate(const MatchGraph& graph, EdgeIoU&& edge_iou) {
  ConnectivityReport r;
  r.isolated_preds = graph.isolated_preds;
  r.n_terms = graph.gt_area.size() + graph.isolated_preds.size();

  double total = 0.0;
  std::size_t next = 0;
  for (std::int32_t id = 1; id <= graph.num_gt(); ++id) {
    GtConnectivity c{id, 0.0, {}};
    if (next < graph.pairs.size() && graph.pairs[next].gt_id == id) {
      const auto& m = graph.pairs[next++];
      double sum = 0.0;
      for (const auto& e : m.preds) {
        sum += edge_iou(m, e);
        c.matched_preds.push_back(e.pred_id);
      }
      c.connectivity = sum / static_cast<double>(m.preds.size());
    }
    total += c.connectivity;
    r.per_gt_connectivity.push_back(std::move(c));
  }
  r.sc = r.n_terms == 0 ? 1.0 : total / static_cast<double>(r.n_terms);
  return r;
}

}  // namespace detail

/// Connectivity of one GT component: mean IoU over its paired predictions,
/// 0 when isolated.
inline double gt_connectivity(std::int32_t gt_id, const MatchGraph& graph) {
  const GtMatch* m = graph.find(gt_id);
  if (m == nullptr) return 0.0;
  double sum = 0.0;
  for (const auto& e : m->preds) {
    sum += detail::iou_from_sums(static_cast<double>(graph.gt_area[gt_id - 1]),
                                 static_cast<double>(graph.pred_area[e.pred_id - 1]),
                                 static_cast<double>(e.intersection));
  }
  return sum / static_cast<double>(m->preds.size());
}

inline ConnectivityReport semantic_connectivity(const MatchGraph& graph) {
  auto r = detail::aggregate(graph, [&](const GtMatch& m, const PredOverlap& e) {
    return detail::iou_from_sums(static_cast<double>(graph.gt_area[m.gt_id - 1]),
                                 static_cast<double>(graph.pred_area[e.pred_id - 1]),
                                 static_cast<double>(e.intersection));
  });
  r.loss = 1.0 - r.sc;
  return r;
}

inline ConnectivityReport semantic_connectivity(const LabelMap& gt, const LabelMap& pred) {
  return semantic_connectivity(match_components(gt, pred));
}

/// Hard SC loss on binary masks. `loss` and `cold_start` in the returned
/// report carry the loss branch taken.
inline ConnectivityReport sc_loss_hard(const BinaryMask& gt, const BinaryMask& pred) {
  require_same_shape(gt, pred, "sc_loss_hard");
  const auto graph =
      match_components(label_components_bbdt(gt), label_components_bbdt(pred));
  auto r = semantic_connectivity(graph);
  if (graph.pairs.empty()) {
    const std::size_t uni = mask_area(mask_union(gt, pred));
    r.cold_start = uni != 0;
    r.loss = static_cast<double>(uni) / static_cast<double>(gt.size());
  }
  return r;
}

/// Differentiable SC loss. Components come from binarize(q, threshold) and
/// gt; areas of prediction components are relaxed to probability mass.
inline SoftLossResult sc_loss_soft(const ProbabilityMap& q, const BinaryMask& gt,
                                   double threshold = 0.5) {
  require_same_shape(q, gt, "sc_loss_soft");
  const BinaryMask pred = binarize(q, threshold);
  const LabelMap gl = label_components_bbdt(gt);
  const LabelMap pl = label_components_bbdt(pred);
  const MatchGraph graph = match_components(gl, pl);

  SoftLossResult out{{}, Raster<double>(q.width(), q.height(), 0.0)};
  std::vector<double> grad(q.size(), 0.0);
  const double image_area = static_cast<double>(q.size());

  if (graph.pairs.empty()) {
    out.report = detail::aggregate(graph, [](const GtMatch&, const PredOverlap&) { return 0.0; });
    double pred_mass = 0.0, gt_deficit = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (pred.fg(i)) {
        pred_mass += q[i];
        grad[i] += 1.0 / image_area;
      }
      if (gt.fg(i)) {
        gt_deficit += 1.0 - q[i];
        grad[i] -= 1.0 / image_area;
      }
    }
    out.report.cold_start = (mask_area(gt) + mask_area(pred)) != 0;
    out.report.loss = (pred_mass + gt_deficit) / image_area;
    out.grad = Raster<double>(q.width(), q.height(), std::move(grad));
    return out;
  }

  // Probability mass of every prediction component and of every overlap.
  std::vector<double> pred_mass(static_cast<std::size_t>(graph.num_pred()), 0.0);
  std::unordered_map<std::uint64_t, double> inter_mass;
  auto key = [](std::int32_t g, std::int32_t p) {
    return (static_cast<std::uint64_t>(g) << 32) | static_cast<std::uint32_t>(p);
  };
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto p = pl[i];
    if (!p) continue;
    pred_mass[p - 1] += q[i];
    if (gl[i]) inter_mass[key(gl[i], p)] += q[i];
  }

  auto soft_iou = [&](std::int32_t g, std::int32_t p) {
    return detail::iou_from_sums(static_cast<double>(graph.gt_area[g - 1]), pred_mass[p - 1],
                                 inter_mass[key(g, p)]);
  };
  out.report = detail::aggregate(
      graph, [&](const GtMatch& m, const PredOverlap& e) { return soft_iou(m.gt_id, e.pred_id); });
  out.report.loss = 1.0 - out.report.sc;

  // loss = 1 - (1/N) sum_g (1/k_g) sum_p I/U with U = |g| + M_p - I. For a
  // pixel of p: dI/dq = [x in g], dU/dq = 1 - [x in g]. So the edge (g,p)
  // contributes -w/U inside g and +w*I/U^2 outside g, w = 1/(N k_g).
  const double inv_n = 1.0 / static_cast<double>(out.report.n_terms);
  std::vector<double> outside(static_cast<std::size_t>(graph.num_pred()), 0.0);
  std::unordered_map<std::uint64_t, double> inside;  // correction for x in g n p
  for (const auto& m : graph.pairs) {
    const double w = inv_n / static_cast<double>(m.preds.size());
    for (const auto& e : m.preds) {
      const double inter = inter_mass[key(m.gt_id, e.pred_id)];
      const double uni = static_cast<double>(graph.gt_area[m.gt_id - 1]) +
                         pred_mass[e.pred_id - 1] - inter;
      const double out_g = w * inter / (uni * uni);
      const double in_g = -w / uni;
      outside[e.pred_id - 1] += out_g;
      inside[key(m.gt_id, e.pred_id)] = in_g - out_g;
    }
  }
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto p = pl[i];
    if (!p) continue;
    grad[i] = outside[p - 1];
    if (gl[i]) {
      if (auto it = inside.find(key(gl[i], p)); it != inside.end()) grad[i] += it->second;
    }
  }
  out.grad = Raster<double>(q.width(), q.height(), std::move(grad));
  return out;
}

/// L = L_S + lambda * L_SC.
inline double combined_loss(double seg_loss, double sc_loss, double lambda = 1.0) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("lambda must be a finite value >= 0, got " + std::to_string(lambda));
  }
  return seg_loss + lambda * sc_loss;
}

/// Mean binary cross-entropy between q and gt; q is clamped to [eps, 1-eps].
inline double binary_cross_entropy(const ProbabilityMap& q, const BinaryMask& gt,
                                   double eps = 1e-7) {
  require_same_shape(q, gt, "binary_cross_entropy");
  double sum = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double v = std::clamp(q[i], eps, 1.0 - eps);
    sum -= gt.fg(i) ? std::log(v) : std::log(1.0 - v);
  }
  return sum / static_cast<double>(q.size());
}

}  // namespace scl
