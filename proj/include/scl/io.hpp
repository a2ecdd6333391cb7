#pragma once

// Raster file formats: 8-bit PNG (masks, label visualisations, RGB frames)
// through libpng's simplified API, and grayscale/colour PFM for float maps.

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scl/errors.hpp"
#include "scl/mask.hpp"

namespace scl {

/// Interleaved 8-bit RGB image.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width*height*3

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {
    if (w < 1 || h < 1) throw ValidationError("image dimensions must be >= 1");
  }

  std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
  }
  bool same_shape(const auto& o) const { return width == o.width() && height == o.height(); }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

namespace detail {

struct PngImage {
  png_image image{};
  PngImage() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

inline std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format,
                                          int& width, int& height) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + png.image.message);
  }
  png.image.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buf.data(), 0, nullptr)) {
    throw IoError("cannot decode PNG " + path.string() + ": " + png.image.message);
  }
  width = static_cast<int>(png.image.width);
  height = static_cast<int>(png.image.height);
  return buf;
}

inline void write_png(const std::filesystem::path& path, png_uint_32 format, int width, int height,
                      const std::uint8_t* data) {
  PngImage png;
  png.image.width = static_cast<png_uint_32>(width);
  png.image.height = static_cast<png_uint_32>(height);
  png.image.format = format;
  if (!png_image_write_to_file(&png.image, path.string().c_str(), 0, data, 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + png.image.message);
  }
}

}  // namespace detail

/// Any gray value > 0 is foreground.
inline BinaryMask read_mask_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto buf = detail::read_png(path, PNG_FORMAT_GRAY, w, h);
  return BinaryMask(w, h, std::move(buf));
}

/// Foreground = 255, background = 0.
inline void write_mask_png(const std::filesystem::path& path, const BinaryMask& m) {
  std::vector<std::uint8_t> buf(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) buf[i] = m.fg(i) ? 255 : 0;
  detail::write_png(path, PNG_FORMAT_GRAY, m.width(), m.height(), buf.data());
}

inline void write_gray_png(const std::filesystem::path& path, int width, int height,
                           const std::vector<std::uint8_t>& gray) {
  detail::write_png(path, PNG_FORMAT_GRAY, width, height, gray.data());
}

inline RgbImage read_rgb_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto buf = detail::read_png(path, PNG_FORMAT_RGB, w, h);
  RgbImage img;
  img.width = w;
  img.height = h;
  img.pixels = std::move(buf);
  return img;
}

inline void write_rgb_png(const std::filesystem::path& path, const RgbImage& img) {
  detail::write_png(path, PNG_FORMAT_RGB, img.width, img.height, img.pixels.data());
}

/// Float raster as read from a PFM file; rows stored top-to-bottom here.
struct FloatImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> values;  // interleaved
};

/// Reads "Pf" (1 channel) or "PF" (3 channel) PFM. Negative scale means
/// little-endian samples. File rows run bottom-to-top.
inline FloatImage read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PFM " + path.string());
  std::string magic;
  double scale = 0.0;
  FloatImage img;
  in >> magic >> img.width >> img.height >> scale;
  if (!in || (magic != "Pf" && magic != "PF") || img.width < 1 || img.height < 1 || scale == 0.0) {
    throw IoError("malformed PFM header in " + path.string());
  }
  in.get();  // single whitespace byte before the raster
  img.channels = magic == "PF" ? 3 : 1;
  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  img.values.resize(row * img.height);
  std::vector<std::uint32_t> raw(row);
  const bool file_le = scale < 0.0;
  const bool host_le = std::endian::native == std::endian::little;
  for (int y = img.height - 1; y >= 0; --y) {
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(row * 4))) {
      throw IoError("truncated PFM raster in " + path.string());
    }
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t bits = raw[i];
      if (file_le != host_le) bits = __builtin_bswap32(bits);
      img.values[static_cast<std::size_t>(y) * row + i] = std::bit_cast<float>(bits);
    }
  }
  return img;
}

inline void write_pfm(const std::filesystem::path& path, const FloatImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write PFM " + path.string());
  out << (img.channels == 3 ? "PF" : "Pf") << "\n"
      << img.width << " " << img.height << "\n-1.0\n";
  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  std::vector<std::uint32_t> raw(row);
  for (int y = img.height - 1; y >= 0; --y) {
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(img.values[static_cast<std::size_t>(y) * row + i]);
      if constexpr (std::endian::native != std::endian::little) bits = __builtin_bswap32(bits);
      raw[i] = bits;
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(row * 4));
  }
  if (!out) throw IoError("failed writing PFM " + path.string());
}

/// Values within 1e-6 of [0,1] are clamped (float round-off from writers);
/// anything further out, or non-finite, is rejected.
inline ProbabilityMap read_probability_pfm(const std::filesystem::path& path) {
  const FloatImage img = read_pfm(path);
  if (img.channels != 1) throw IoError("probability PFM must be grayscale (Pf): " + path.string());
  constexpr double kSlack = 1e-6;
  std::vector<double> probs(img.values.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double v = img.values[i];
    if (!std::isfinite(v) || v < -kSlack || v > 1.0 + kSlack) {
      throw ValidationError("PFM " + path.string() + " value " + std::to_string(v) +
                            " at pixel " + std::to_string(i) + " is outside [0,1]");
    }
    probs[i] = std::clamp(v, 0.0, 1.0);
  }
  return ProbabilityMap(img.width, img.height, std::move(probs));
}

inline void write_probability_pfm(const std::filesystem::path& path, const ProbabilityMap& p) {
  FloatImage img{p.width(), p.height(), 1, {}};
  img.values.reserve(p.size());
  for (double v : p.data()) img.values.push_back(static_cast<float>(v));
  write_pfm(path, img);
}

/// Reads a prediction as probabilities: PFM directly, PNG as {0,1}.
inline ProbabilityMap read_prediction(const std::filesystem::path& path) {
  if (path.extension() == ".pfm") return read_probability_pfm(path);
  return ProbabilityMap::from_mask(read_mask_png(path));
}

}  // namespace scl
