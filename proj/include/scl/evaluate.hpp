#pragma once

// Dataset-level evaluation: one confusion matrix over all pixels for mIoU and
// pixel accuracy, plus per-image semantic connectivity.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scl/connectivity.hpp"
#include "scl/dataset.hpp"
#include "scl/io.hpp"
#include "scl/metrics.hpp"
#include "scl/parallel.hpp"

namespace scl {

struct ImageEval {
  std::string image_path;
  std::string scene_id;
  ConfusionMatrix cm;
  ConnectivityReport sc;
};

struct EvalOptions {
  double threshold = 0.5;
  std::size_t threads = 1;
};

/// Prediction for a frame: <pred_dir>/<image stem>.png, else .pfm.
inline std::filesystem::path find_prediction(const std::filesystem::path& pred_dir,
                                             const FrameRecord& f) {
  const auto stem = std::filesystem::path(f.image_path).stem().string();
  for (const char* ext : {".png", ".pfm"}) {
    auto p = pred_dir / (stem + ext);
    if (std::filesystem::exists(p)) return p;
  }
  throw IoError("no prediction for " + f.image_path + " in " + pred_dir.string() + " (looked for " +
                stem + ".png / .pfm)");
}

inline ImageEval evaluate_image(const BinaryMask& gt, const BinaryMask& pred) {
  return {{}, {}, confusion(gt, pred), sc_loss_hard(gt, pred)};
}

inline std::vector<ImageEval> evaluate_manifest(const DatasetManifest& m,
                                                const std::filesystem::path& manifest_dir,
                                                const std::filesystem::path& pred_dir,
                                                const EvalOptions& opts = {}) {
  std::vector<ImageEval> out(m.frames.size());
  parallel_for(m.frames.size(), opts.threads, [&](std::size_t i) {
    const auto& f = m.frames[i];
    const BinaryMask gt = read_mask_png(resolve(manifest_dir, f.mask_path));
    const BinaryMask pred = binarize(read_prediction(find_prediction(pred_dir, f)), opts.threshold);
    out[i] = evaluate_image(gt, pred);
    out[i].image_path = f.image_path;
    out[i].scene_id = f.scene_id;
  });
  return out;
}

namespace detail {
inline nlohmann::json summary(const ConfusionMatrix& cm, double sc_sum, std::size_t n) {
  return {{"miou", cm.total() ? miou(cm) : 0.0},
          {"pixel_acc", cm.total() ? pixel_accuracy(cm) : 0.0},
          {"mean_sc", n ? sc_sum / static_cast<double>(n) : 0.0},
          {"num_images", n}};
}
}  // namespace detail

/// Report JSON: {miou, pixel_acc, mean_sc, num_images, per_scene, per_image}.
/// Reduction runs in frame order, so the result is independent of threading.
inline nlohmann::json eval_report(const std::vector<ImageEval>& images) {
  ConfusionMatrix total;
  double sc_sum = 0.0;
  struct SceneAcc {
    ConfusionMatrix cm;
    double sc_sum = 0.0;
    std::size_t n = 0;
  };
  std::map<std::string, SceneAcc> scenes;
  nlohmann::json per_image = nlohmann::json::array();

  for (const auto& im : images) {
    total += im.cm;
    sc_sum += im.sc.sc;
    auto& s = scenes[im.scene_id];
    s.cm += im.cm;
    s.sc_sum += im.sc.sc;
    ++s.n;
    per_image.push_back({{"image_path", im.image_path},
                         {"scene_id", im.scene_id},
                         {"miou", miou(im.cm)},
                         {"pixel_acc", pixel_accuracy(im.cm)},
                         {"sc", im.sc.sc},
                         {"sc_loss", im.sc.loss},
                         {"cold_start", im.sc.cold_start},
                         {"confusion", {{"tp", im.cm.tp()}, {"fp", im.cm.fp()},
                                        {"fn", im.cm.fn()}, {"tn", im.cm.tn()}}}});
  }

  nlohmann::json report = detail::summary(total, sc_sum, images.size());
  nlohmann::json per_scene = nlohmann::json::object();
  for (const auto& [id, s] : scenes) per_scene[id] = detail::summary(s.cm, s.sc_sum, s.n);
  report["per_scene"] = std::move(per_scene);
  report["per_image"] = std::move(per_image);
  return report;
}

}  // namespace scl
