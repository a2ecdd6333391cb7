#pragma once

// Test-only helpers: random generators, brute-force oracles that do not share
// code paths with the library's matching/aggregation, and a subprocess runner
// for CLI tests.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "scl/ccl.hpp"
#include "scl/dataset.hpp"
#include "scl/io.hpp"
#include "scl/mask.hpp"

namespace scl::testing {

inline BinaryMask random_mask(std::mt19937_64& rng, int w, int h, double density) {
  std::bernoulli_distribution on(density);
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(w) * h);
  for (auto& b : bits) b = on(rng) ? 1 : 0;
  return BinaryMask(w, h, std::move(bits));
}

/// Blobby mask: union of random filled rectangles, gives larger components
/// than i.i.d. noise.
inline BinaryMask random_blobs(std::mt19937_64& rng, int w, int h, int count) {
  BinaryMask m(w, h);
  std::uniform_int_distribution<int> xs(0, w - 1), ys(0, h - 1);
  for (int i = 0; i < count; ++i) {
    int x0 = xs(rng), x1 = xs(rng), y0 = ys(rng), y1 = ys(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    x1 = std::min(x1, x0 + w / 3);
    y1 = std::min(y1, y0 + h / 3);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) m.set(x, y, true);
  }
  return m;
}

/// Mask from a row-major string of '#' (foreground) and '.' characters.
inline BinaryMask mask_from_rows(const std::vector<std::string>& rows) {
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(rows.front().size());
  BinaryMask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, rows[y][x] == '#');
  return m;
}

// Four GT and five prediction components. After raster numbering the
// pairs are (g2,p2), (g3,p5), (g4,p4); g1, p1 and p3 are isolated.
inline BinaryMask fig3_gt() {
  return mask_from_rows({
      "##..........",
      "............",
      "####........",
      "............",
      "....####.###",
      "....####.###",
  });
}
inline BinaryMask fig3_pred() {
  return mask_from_rows({
      "....##......",
      "............",
      ".####.......",
      "............",
      "##.......##.",
      "....####....",
  });
}

struct OracleSc {
  double sc = 1.0;
  std::size_t n_terms = 0;
  bool any_pair = false;
};

/// SC by direct enumeration: every (g, p) component pair is tested by a full
/// pixel scan, no shared matching graph.
inline OracleSc brute_force_sc(const BinaryMask& gt, const BinaryMask& pred) {
  const LabelMap gl = label_components_floodfill(gt);
  const LabelMap pl = label_components_floodfill(pred);
  const int kg = gl.num_components(), kp = pl.num_components();
  OracleSc out;
  std::vector<bool> pred_paired(static_cast<std::size_t>(kp) + 1, false);
  double sum = 0.0;
  for (int g = 1; g <= kg; ++g) {
    double iou_sum = 0.0;
    int k = 0;
    for (int p = 1; p <= kp; ++p) {
      std::size_t inter = 0, uni = 0;
      for (std::size_t i = 0; i < gl.size(); ++i) {
        const bool a = gl[i] == g, b = pl[i] == p;
        inter += a && b;
        uni += a || b;
      }
      if (inter == 0) continue;
      iou_sum += static_cast<double>(inter) / static_cast<double>(uni);
      ++k;
      pred_paired[p] = true;
      out.any_pair = true;
    }
    if (k) sum += iou_sum / k;
  }
  std::size_t isolated = 0;
  for (int p = 1; p <= kp; ++p) isolated += !pred_paired[p];
  out.n_terms = static_cast<std::size_t>(kg) + isolated;
  out.sc = out.n_terms ? sum / static_cast<double>(out.n_terms) : 1.0;
  return out;
}

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("scl_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

struct ProcessResult {
  int exit_code = -1;
  std::string out;
};

/// Runs a shell command, capturing stdout; stderr goes to `stderr_path` when
/// given, else is discarded.
inline ProcessResult run(const std::string& cmd, const std::string& stderr_path = {}) {
  const std::string full = cmd + " 2>" + (stderr_path.empty() ? "/dev/null" : stderr_path);
  ProcessResult r;
  FILE* pipe = popen(full.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

/// Writes `scenes` scenes of `videos` videos x `frames` frames each: RGB
/// noise portraits with blob masks, plus manifest.json. Scene ids are
/// "scene_00".. and video ids "<scene>_v<k>".
inline DatasetManifest make_synthetic_dataset(const std::filesystem::path& dir, int scenes,
                                              int videos, int frames, int w, int h,
                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  DatasetManifest m;
  for (int s = 0; s < scenes; ++s) {
    char sid[32];
    std::snprintf(sid, sizeof sid, "scene_%02d", s);
    for (int v = 0; v < videos; ++v) {
      const std::string vid = std::string(sid) + "_v" + std::to_string(v);
      m.videos.push_back({vid, sid, 1 + v % 3, {"talking"}, v % 2 == 1, false});
      for (int f = 0; f < frames; ++f) {
        const std::string name = vid + "_f" + std::to_string(f) + ".png";
        RgbImage img(w, h);
        for (auto& b : img.pixels) b = static_cast<std::uint8_t>(rng());
        write_rgb_png(dir / "images" / name, img);
        write_mask_png(dir / "masks" / name, random_blobs(rng, w, h, 2));
        m.frames.push_back({"images/" + name, "masks/" + name, vid, sid, f});
      }
    }
  }
  save_manifest(dir / "manifest.json", m);
  return m;
}

/// Solid-colour-with-gradient backgrounds of assorted sizes.
inline void make_backgrounds(const std::filesystem::path& dir, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    const int w = 8 + static_cast<int>(rng() % 40), h = 8 + static_cast<int>(rng() % 40);
    RgbImage bg(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        bg.at(x, y)[0] = static_cast<std::uint8_t>(x * 5 + i * 20);
        bg.at(x, y)[1] = static_cast<std::uint8_t>(y * 5);
        bg.at(x, y)[2] = static_cast<std::uint8_t>(rng());
      }
    write_rgb_png(dir / ("bg" + std::to_string(i) + ".png"), bg);
  }
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline std::string quote(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace scl::testing
