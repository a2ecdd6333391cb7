#pragma once

// Dataset manifests, scene-level splitting, and background compositing.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scl/errors.hpp"
#include "scl/io.hpp"
#include "scl/mask.hpp"
#include "scl/parallel.hpp"

namespace scl {

namespace fs = std::filesystem;

struct FrameRecord {
  std::string image_path;
  std::string mask_path;
  std::string video_id;
  std::string scene_id;  // resolved from the owning video
  std::int64_t frame_index = 0;
  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

struct VideoAttributes {
  std::string video_id;
  std::string scene_id;
  std::int64_t num_participants = 0;
  std::vector<std::string> activities;
  bool wearing_mask = false;
  bool passersby = false;
  friend bool operator==(const VideoAttributes&, const VideoAttributes&) = default;
};

struct DatasetManifest {
  std::vector<FrameRecord> frames;
  std::vector<VideoAttributes> videos;

  /// Distinct scene ids over all videos, sorted.
  std::vector<std::string> scenes() const {
    std::set<std::string> s;
    for (const auto& v : videos) s.insert(v.scene_id);
    return {s.begin(), s.end()};
  }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Checks every manifest invariant and fills each frame's scene_id from its
/// video. Errors name the offending record.
inline void validate(DatasetManifest& m) {
  std::map<std::string, const VideoAttributes*> by_id;
  for (std::size_t i = 0; i < m.videos.size(); ++i) {
    const auto& v = m.videos[i];
    const std::string where = "videos[" + std::to_string(i) + "]";
    if (v.video_id.empty()) throw ValidationError(where + ": empty video_id");
    if (v.scene_id.empty()) throw ValidationError(where + " (" + v.video_id + "): empty scene_id");
    if (v.num_participants < 0) {
      throw ValidationError(where + " (" + v.video_id + "): negative num_participants");
    }
    if (!by_id.emplace(v.video_id, &v).second) {
      throw ValidationError(where + ": duplicate video_id '" + v.video_id + "'");
    }
  }
  for (std::size_t i = 0; i < m.frames.size(); ++i) {
    auto& f = m.frames[i];
    const std::string where = "frames[" + std::to_string(i) + "]";
    if (f.image_path.empty() || f.mask_path.empty()) {
      throw ValidationError(where + ": empty image_path or mask_path");
    }
    if (f.frame_index < 0) throw ValidationError(where + ": negative frame_index");
    auto it = by_id.find(f.video_id);
    if (it == by_id.end()) {
      throw ValidationError(where + ": unknown video_id '" + f.video_id + "'");
    }
    if (!f.scene_id.empty() && f.scene_id != it->second->scene_id) {
      throw ValidationError(where + ": scene_id '" + f.scene_id + "' disagrees with video '" +
                            f.video_id + "' (scene '" + it->second->scene_id + "')");
    }
    f.scene_id = it->second->scene_id;
  }
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json videos = nlohmann::json::array();
  for (const auto& v : m.videos) {
    videos.push_back({{"video_id", v.video_id},
                      {"scene_id", v.scene_id},
                      {"num_participants", v.num_participants},
                      {"activities", v.activities},
                      {"wearing_mask", v.wearing_mask},
                      {"passersby", v.passersby}});
  }
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : m.frames) {
    frames.push_back({{"image_path", f.image_path},
                      {"mask_path", f.mask_path},
                      {"video_id", f.video_id},
                      {"frame_index", f.frame_index}});
  }
  return {{"videos", std::move(videos)}, {"frames", std::move(frames)}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    for (const auto& v : j.at("videos")) {
      VideoAttributes a;
      a.video_id = v.at("video_id").get<std::string>();
      a.scene_id = v.at("scene_id").get<std::string>();
      a.num_participants = v.value("num_participants", std::int64_t{0});
      a.activities = v.value("activities", std::vector<std::string>{});
      a.wearing_mask = v.value("wearing_mask", false);
      a.passersby = v.value("passersby", false);
      m.videos.push_back(std::move(a));
    }
    for (const auto& f : j.at("frames")) {
      FrameRecord r;
      r.image_path = f.at("image_path").get<std::string>();
      r.mask_path = f.at("mask_path").get<std::string>();
      r.video_id = f.at("video_id").get<std::string>();
      r.frame_index = f.at("frame_index").get<std::int64_t>();
      r.scene_id = f.value("scene_id", std::string{});
      m.frames.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest schema error: ") + e.what());
  }
  validate(m);
  return m;
}

inline DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return manifest_from_json(j);
}

inline void save_manifest(const fs::path& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << to_json(m).dump(2) << "\n";
  if (!out) throw IoError("failed writing manifest " + path.string());
}

/// Resolves a manifest-relative path.
inline fs::path resolve(const fs::path& base_dir, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

namespace detail {

// Unbiased draw in [0, n) from a 64-bit engine. std::uniform_int_distribution
// is implementation-defined, which would make splits differ across stdlibs.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

inline DatasetManifest restrict_to_scenes(const DatasetManifest& m,
                                          const std::set<std::string>& scenes) {
  DatasetManifest out;
  for (const auto& v : m.videos)
    if (scenes.count(v.scene_id)) out.videos.push_back(v);
  for (const auto& f : m.frames)
    if (scenes.count(f.scene_id)) out.frames.push_back(f);
  return out;
}

}  // namespace detail

struct SceneCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

struct SceneSplit {
  DatasetManifest train;
  DatasetManifest val;
  DatasetManifest test;
};

/// Partitions scenes by a seeded shuffle of the sorted scene ids; every
/// video and frame follows its scene.
inline SceneSplit scene_split(const DatasetManifest& m, SceneCounts counts, std::uint64_t seed = 0) {
  auto scenes = m.scenes();
  if (counts.train + counts.val + counts.test != scenes.size()) {
    throw ValidationError("scene counts " + std::to_string(counts.train) + "," +
                          std::to_string(counts.val) + "," + std::to_string(counts.test) +
                          " do not sum to the " + std::to_string(scenes.size()) +
                          " scenes in the manifest");
  }
  std::mt19937_64 rng(seed);
  detail::seeded_shuffle(scenes, rng);
  auto take = [&](std::size_t from, std::size_t n) {
    return std::set<std::string>(scenes.begin() + static_cast<std::ptrdiff_t>(from),
                                 scenes.begin() + static_cast<std::ptrdiff_t>(from + n));
  };
  return {detail::restrict_to_scenes(m, take(0, counts.train)),
          detail::restrict_to_scenes(m, take(counts.train, counts.val)),
          detail::restrict_to_scenes(m, take(counts.train + counts.val, counts.test))};
}

/// Bilinear resize, pixel-centre aligned.
inline RgbImage resize_bilinear(const RgbImage& src, int width, int height) {
  RgbImage out(width, height);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = src.at(x0, y0)[c] * (1 - wx) + src.at(x1, y0)[c] * wx;
        const double bot = src.at(x0, y1)[c] * (1 - wx) + src.at(x1, y1)[c] * wx;
        out.at(x, y)[c] = static_cast<std::uint8_t>(std::lround(top * (1 - wy) + bot * wy));
      }
    }
  }
  return out;
}

/// Scales `bg` uniformly until it covers width x height, then center-crops.
inline RgbImage fit_background(const RgbImage& bg, int width, int height) {
  if (bg.width == width && bg.height == height) return bg;
  const double s = std::max(static_cast<double>(width) / bg.width,
                            static_cast<double>(height) / bg.height);
  const int sw = std::max(width, static_cast<int>(std::ceil(bg.width * s - 1e-9)));
  const int sh = std::max(height, static_cast<int>(std::ceil(bg.height * s - 1e-9)));
  const RgbImage scaled = (sw == bg.width && sh == bg.height) ? bg : resize_bilinear(bg, sw, sh);
  const int ox = (sw - width) / 2;
  const int oy = (sh - height) / 2;
  RgbImage out(width, height);
  for (int y = 0; y < height; ++y) {
    std::copy_n(scaled.at(ox, oy + y), static_cast<std::size_t>(width) * 3, out.at(0, y));
  }
  return out;
}

struct CompositeOptions {
  bool feather = false;  // 3x3 box-blurred alpha along the mask edge
};

/// Foreground pixels from `fg` where the mask is set, `bg` elsewhere. `bg`
/// is fitted to the frame with fit_background when its size differs.
inline RgbImage composite(const RgbImage& fg, const BinaryMask& mask, const RgbImage& bg,
                          CompositeOptions opts = {}) {
  if (fg.width != mask.width() || fg.height != mask.height()) {
    throw IncompatibleRaster("composite: foreground image and mask differ in size");
  }
  const RgbImage base = fit_background(bg, fg.width, fg.height);
  RgbImage out = base;
  for (int y = 0; y < fg.height; ++y) {
    for (int x = 0; x < fg.width; ++x) {
      if (!opts.feather) {
        if (mask.fg(x, y)) std::copy_n(fg.at(x, y), 3, out.at(x, y));
        continue;
      }
      int on = 0, n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = std::clamp(x + dx, 0, fg.width - 1);
          const int ny = std::clamp(y + dy, 0, fg.height - 1);
          on += mask.fg(nx, ny);
          ++n;
        }
      }
      const double a = static_cast<double>(on) / n;
      for (int c = 0; c < 3; ++c) {
        out.at(x, y)[c] = static_cast<std::uint8_t>(
            std::lround(a * fg.at(x, y)[c] + (1.0 - a) * base.at(x, y)[c]));
      }
    }
  }
  return out;
}

struct CompositeBatchOptions {
  std::size_t per_frame = 1;
  std::uint64_t seed = 0;
  bool feather = false;
  std::size_t threads = 1;
};

struct CompositeBatchResult {
  DatasetManifest manifest;         // synthetic set, paths relative to out_dir
  std::vector<std::string> errors;  // one line per failed record
};

/// Background image files in `dir`, sorted by name.
inline std::vector<fs::path> list_backgrounds(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("background directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no .png backgrounds in " + dir.string());
  return out;
}

/// Seeded background choice for every frame: `per_frame` distinct picks per
/// frame while enough backgrounds exist, wrapping around otherwise.
inline std::vector<std::vector<std::size_t>> assign_backgrounds(std::size_t frames,
                                                                std::size_t backgrounds,
                                                                std::size_t per_frame,
                                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> out(frames);
  std::vector<std::size_t> order(backgrounds);
  for (auto& picks : out) {
    for (std::size_t i = 0; i < backgrounds; ++i) order[i] = i;
    detail::seeded_shuffle(order, rng);
    for (std::size_t j = 0; j < per_frame; ++j) picks.push_back(order[j % backgrounds]);
  }
  return out;
}

/// Composites every frame of `m` onto `per_frame` backgrounds. Writes
/// out_dir/images/*.png, byte copies of masks to out_dir/masks/, and returns
/// the synthetic manifest (not yet saved). Missing or unreadable inputs are
/// reported per record and skipped.
inline CompositeBatchResult composite_batch(const DatasetManifest& m, const fs::path& manifest_dir,
                                            const fs::path& bg_dir, const fs::path& out_dir,
                                            const CompositeBatchOptions& opts) {
  if (opts.per_frame == 0) throw ValidationError("per-frame background count must be >= 1");
  const auto bgs = list_backgrounds(bg_dir);
  const auto picks = assign_backgrounds(m.frames.size(), bgs.size(), opts.per_frame, opts.seed);
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");

  struct Outcome {
    std::vector<FrameRecord> records;
    std::string error;
  };
  std::vector<Outcome> outcomes(m.frames.size());

  parallel_for(m.frames.size(), opts.threads, [&](std::size_t i) {
    const auto& f = m.frames[i];
    auto& res = outcomes[i];
    try {
      const RgbImage fg = read_rgb_png(resolve(manifest_dir, f.image_path));
      const fs::path mask_src = resolve(manifest_dir, f.mask_path);
      const BinaryMask mask = read_mask_png(mask_src);
      char prefix[32];
      std::snprintf(prefix, sizeof prefix, "%06zu_", i);
      const std::string stem = prefix + fs::path(f.image_path).stem().string();
      for (std::size_t j = 0; j < picks[i].size(); ++j) {
        const RgbImage bg = read_rgb_png(bgs[picks[i][j]]);
        const RgbImage out = composite(fg, mask, bg, {opts.feather});
        const std::string name = stem + "_bg" + std::to_string(j) + ".png";
        write_rgb_png(out_dir / "images" / name, out);
        fs::copy_file(mask_src, out_dir / "masks" / name, fs::copy_options::overwrite_existing);
        res.records.push_back(
            {"images/" + name, "masks/" + name, f.video_id, f.scene_id, f.frame_index});
      }
    } catch (const std::exception& e) {
      res.records.clear();
      res.error = "frames[" + std::to_string(i) + "] (" + f.image_path + "): " + e.what();
    }
  });

  CompositeBatchResult result;
  result.manifest.videos = m.videos;
  for (auto& o : outcomes) {
    if (!o.error.empty()) result.errors.push_back(std::move(o.error));
    for (auto& r : o.records) result.manifest.frames.push_back(std::move(r));
  }
  return result;
}

}  // namespace scl
