#pragma once

// Inference-only building blocks of a lightweight encoder-decoder
// segmentation network: grouped/depthwise/pointwise convolution, channel
// shuffle, inverted bottlenecks, bilinear upsampling and skip concatenation.
// Tensors are float NCHW. Layers carry no bias (normalisation is assumed
// folded into the weights).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scl/errors.hpp"

namespace scl::nn {

struct Shape {
  int n = 1, c = 1, h = 1, w = 1;
  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
         std::to_string(s.w);
}

class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape s, float fill = 0.0f) : shape_(s) {
    check(s);
    data_.assign(s.numel(), fill);
  }
  Tensor4(Shape s, std::vector<float> data) : shape_(s), data_(std::move(data)) {
    check(s);
    if (data_.size() != s.numel()) {
      throw ValidationError("tensor data length does not match shape " + to_string(s));
    }
    for (float v : data_) {
      if (!std::isfinite(v)) throw ValidationError("tensor values must be finite");
    }
  }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }

  std::size_t offset(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  float& at(int n, int c, int y, int x) { return data_[offset(n, c, y, x)]; }
  float at(int n, int c, int y, int x) const { return data_[offset(n, c, y, x)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  static void check(const Shape& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
      throw ValidationError("tensor dimensions must be >= 1, got " + to_string(s));
    }
  }

  Shape shape_;
  std::vector<float> data_;
};

// ---------------------------------------------------------------------------
// Primitive operations.

struct ConvParams {
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int groups = 1;
};

inline int conv_out_size(int size, int kernel, int stride) {
  const int pad = kernel / 2;
  return (size + 2 * pad - kernel) / stride + 1;
}

/// Weight count of a grouped convolution: k*k*(Cin/groups)*Cout.
inline std::size_t conv_param_count(int in_channels, const ConvParams& p) {
  return static_cast<std::size_t>(p.kernel) * p.kernel * (in_channels / p.groups) * p.out_channels;
}

/// Grouped 2-D convolution, zero "same" padding of kernel/2. Weights laid out
/// [Cout][Cin/groups][k][k].
inline Tensor4 conv2d(const Tensor4& x, std::span<const float> weights, const ConvParams& p) {
  const int cin = x.c();
  if (p.groups < 1 || cin % p.groups != 0 || p.out_channels % p.groups != 0) {
    throw ValidationError("conv2d: groups " + std::to_string(p.groups) + " must divide Cin " +
                          std::to_string(cin) + " and Cout " + std::to_string(p.out_channels));
  }
  if (p.kernel < 1 || p.kernel % 2 == 0 || p.stride < 1) {
    throw ValidationError("conv2d: kernel must be odd and stride >= 1");
  }
  if (weights.size() != conv_param_count(cin, p)) {
    throw ValidationError("conv2d: expected " + std::to_string(conv_param_count(cin, p)) +
                          " weights, got " + std::to_string(weights.size()));
  }
  const int k = p.kernel, pad = k / 2;
  const int cin_g = cin / p.groups, cout_g = p.out_channels / p.groups;
  Tensor4 out({x.n(), p.out_channels, conv_out_size(x.h(), k, p.stride),
               conv_out_size(x.w(), k, p.stride)});
  for (int n = 0; n < x.n(); ++n) {
    for (int co = 0; co < p.out_channels; ++co) {
      const int g = co / cout_g;
      const float* wco = weights.data() + static_cast<std::size_t>(co) * cin_g * k * k;
      for (int oy = 0; oy < out.h(); ++oy) {
        for (int ox = 0; ox < out.w(); ++ox) {
          float acc = 0.0f;
          for (int ci = 0; ci < cin_g; ++ci) {
            const int c = g * cin_g + ci;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * p.stride + ky - pad;
              if (iy < 0 || iy >= x.h()) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * p.stride + kx - pad;
                if (ix < 0 || ix >= x.w()) continue;
                acc += wco[(ci * k + ky) * k + kx] * x.at(n, c, iy, ix);
              }
            }
          }
          out.at(n, co, oy, ox) = acc;
        }
      }
    }
  }
  return out;
}

inline Tensor4 relu(Tensor4 x) {
  for (float& v : x.data()) v = std::max(v, 0.0f);
  return x;
}

/// Reshape channels to (groups, C/groups), transpose, flatten.
inline Tensor4 channel_shuffle(const Tensor4& x, int groups) {
  if (groups < 1 || x.c() % groups != 0) {
    throw ValidationError("channel_shuffle: groups " + std::to_string(groups) +
                          " does not divide " + std::to_string(x.c()) + " channels");
  }
  const int per = x.c() / groups;
  Tensor4 out(x.shape());
  const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < x.c(); ++o) {
      const int src = (o % groups) * per + o / groups;
      std::copy_n(x.data().begin() + x.offset(n, src, 0, 0), plane,
                  out.data().begin() + out.offset(n, o, 0, 0));
    }
  }
  return out;
}

inline std::size_t separable_param_count(int in_channels, int out_channels, int kernel) {
  return static_cast<std::size_t>(kernel) * kernel * in_channels +
         static_cast<std::size_t>(in_channels) * out_channels;
}

/// Depthwise k x k (stride) then pointwise Cin -> Cout. Weights are the
/// depthwise block [Cin][k][k] followed by the pointwise block [Cout][Cin].
/// Linear; activations are applied by the caller.
inline Tensor4 depthwise_separable_conv(const Tensor4& x, std::span<const float> weights,
                                        int out_channels, int kernel, int stride = 1) {
  const std::size_t dw = static_cast<std::size_t>(kernel) * kernel * x.c();
  if (weights.size() != separable_param_count(x.c(), out_channels, kernel)) {
    throw ValidationError("depthwise_separable_conv: weight count mismatch");
  }
  const Tensor4 mid = conv2d(x, weights.first(dw), {x.c(), kernel, stride, x.c()});
  return conv2d(mid, weights.subspan(dw), {out_channels, 1, 1, 1});
}

struct BottleneckSpec {
  int out_channels = 0;
  int expansion = 1;
  int kernel = 3;
  int stride = 1;
  int groups = 1;  // grouped pointwise convs + shuffle after expansion
};

inline std::size_t bottleneck_param_count(int in_channels, const BottleneckSpec& b) {
  const int mid = in_channels * b.expansion;
  return conv_param_count(in_channels, {mid, 1, 1, b.groups}) +
         conv_param_count(mid, {mid, b.kernel, b.stride, mid}) +
         conv_param_count(mid, {b.out_channels, 1, 1, b.groups});
}

inline bool bottleneck_has_residual(int in_channels, const BottleneckSpec& b) {
  return b.stride == 1 && in_channels == b.out_channels;
}

/// expand (grouped 1x1, ReLU) -> channel shuffle -> depthwise k x k (stride,
/// ReLU) -> project (grouped 1x1) -> + input when stride 1 and Cin == Cout.
inline Tensor4 inverted_bottleneck(const Tensor4& x, std::span<const float> weights,
                                   const BottleneckSpec& b) {
  if (b.stride != 1 && b.stride != 2) throw ValidationError("inverted_bottleneck: stride must be 1 or 2");
  if (b.expansion < 1) throw ValidationError("inverted_bottleneck: expansion must be >= 1");
  if (weights.size() != bottleneck_param_count(x.c(), b)) {
    throw ValidationError("inverted_bottleneck: expected " +
                          std::to_string(bottleneck_param_count(x.c(), b)) + " weights, got " +
                          std::to_string(weights.size()));
  }
  const int mid = x.c() * b.expansion;
  const ConvParams expand{mid, 1, 1, b.groups};
  const ConvParams depth{mid, b.kernel, b.stride, mid};
  const ConvParams project{b.out_channels, 1, 1, b.groups};
  const std::size_t n1 = conv_param_count(x.c(), expand);
  const std::size_t n2 = conv_param_count(mid, depth);

  Tensor4 t = relu(conv2d(x, weights.first(n1), expand));
  if (b.groups > 1) t = channel_shuffle(t, b.groups);
  t = relu(conv2d(t, weights.subspan(n1, n2), depth));
  t = conv2d(t, weights.subspan(n1 + n2), project);
  if (bottleneck_has_residual(x.c(), b)) {
    auto out = t.data();
    auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
  }
  return t;
}

/// Bilinear x2 upsampling, half-pixel centres.
inline Tensor4 upsample2x(const Tensor4& x) {
  Tensor4 out({x.n(), x.c(), x.h() * 2, x.w() * 2});
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int oy = 0; oy < out.h(); ++oy) {
        const float fy = std::clamp((oy + 0.5f) * 0.5f - 0.5f, 0.0f, x.h() - 1.0f);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, x.h() - 1);
        const float wy = fy - y0;
        for (int ox = 0; ox < out.w(); ++ox) {
          const float fx = std::clamp((ox + 0.5f) * 0.5f - 0.5f, 0.0f, x.w() - 1.0f);
          const int x0 = static_cast<int>(fx);
          const int x1 = std::min(x0 + 1, x.w() - 1);
          const float wx = fx - x0;
          const float top = x.at(n, c, y0, x0) * (1 - wx) + x.at(n, c, y0, x1) * wx;
          const float bot = x.at(n, c, y1, x0) * (1 - wx) + x.at(n, c, y1, x1) * wx;
          out.at(n, c, oy, ox) = top * (1 - wy) + bot * wy;
        }
      }
    }
  }
  return out;
}

/// Channel concatenation [a, b]; spatial shapes must match.
inline Tensor4 concat_channels(const Tensor4& a, const Tensor4& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ValidationError("concat: shapes " + to_string(a.shape()) + " and " +
                          to_string(b.shape()) + " differ spatially");
  }
  Tensor4 out({a.n(), a.c() + b.c(), a.h(), a.w()});
  const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
  for (int n = 0; n < a.n(); ++n) {
    std::copy_n(a.data().begin() + a.offset(n, 0, 0, 0), plane * a.c(),
                out.data().begin() + out.offset(n, 0, 0, 0));
    std::copy_n(b.data().begin() + b.offset(n, 0, 0, 0), plane * b.c(),
                out.data().begin() + out.offset(n, a.c(), 0, 0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Network description.

enum class LayerKind { kConv, kDepthwise, kPointwise, kShuffle, kBottleneck, kSeparable, kUpsample, kConcat };

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kDepthwise: return "depthwise";
    case LayerKind::kPointwise: return "pointwise";
    case LayerKind::kShuffle: return "shuffle";
    case LayerKind::kBottleneck: return "bottleneck";
    case LayerKind::kSeparable: return "separable";
    case LayerKind::kUpsample: return "upsample";
    case LayerKind::kConcat: return "concat";
  }
  return "?";
}

inline LayerKind parse_kind(const std::string& s) {
  for (auto k : {LayerKind::kConv, LayerKind::kDepthwise, LayerKind::kPointwise, LayerKind::kShuffle,
                 LayerKind::kBottleneck, LayerKind::kSeparable, LayerKind::kUpsample,
                 LayerKind::kConcat}) {
    if (s == kind_name(k)) return k;
  }
  throw ValidationError("unknown layer type '" + s + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  int out_channels = 0;  // conv, pointwise, bottleneck, separable
  int kernel = 3;
  int stride = 1;
  int groups = 1;     // shuffle group count; grouping of conv/pointwise/bottleneck
  int expansion = 1;  // bottleneck
  bool relu = true;   // conv, depthwise, pointwise, separable
  int source = -1;    // concat: index of the layer whose output is appended

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetSpec {
  int in_channels = 3;
  std::vector<LayerSpec> layers;
  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

namespace detail {

[[noreturn]] inline void layer_error(std::size_t i, const LayerSpec& l, const std::string& msg) {
  throw ValidationError("layer " + std::to_string(i) + " (" + kind_name(l.kind) + "): " + msg);
}

inline BottleneckSpec as_bottleneck(const LayerSpec& l) {
  return {l.out_channels, l.expansion, l.kernel, l.stride, l.groups};
}

inline void require_divides(std::size_t i, const LayerSpec& l, int groups, int channels) {
  if (groups < 1 || channels % groups != 0) {
    layer_error(i, l, "groups " + std::to_string(groups) + " does not divide " +
                          std::to_string(channels) + " channels");
  }
}

// Output shape and weight count of one layer, validating the layer description.
inline std::pair<Shape, std::size_t> layer_shape(std::size_t i, const LayerSpec& l, const Shape& in,
                                                 const std::vector<Shape>& earlier) {
  auto spatial = [&](int kernel, int stride) {
    if (kernel < 1 || kernel % 2 == 0) layer_error(i, l, "kernel must be odd");
    if (stride < 1) layer_error(i, l, "stride must be >= 1");
    return std::pair{conv_out_size(in.h, kernel, stride), conv_out_size(in.w, kernel, stride)};
  };
  auto need_out = [&] {
    if (l.out_channels < 1) layer_error(i, l, "out_channels must be >= 1");
  };
  switch (l.kind) {
    case LayerKind::kConv: {
      need_out();
      require_divides(i, l, l.groups, in.c);
      require_divides(i, l, l.groups, l.out_channels);
      auto [h, w] = spatial(l.kernel, l.stride);
      return {{in.n, l.out_channels, h, w},
              conv_param_count(in.c, {l.out_channels, l.kernel, l.stride, l.groups})};
    }
    case LayerKind::kDepthwise: {
      auto [h, w] = spatial(l.kernel, l.stride);
      return {{in.n, in.c, h, w}, static_cast<std::size_t>(l.kernel) * l.kernel * in.c};
    }
    case LayerKind::kPointwise:
      need_out();
      require_divides(i, l, l.groups, in.c);
      require_divides(i, l, l.groups, l.out_channels);
      return {{in.n, l.out_channels, in.h, in.w},
              conv_param_count(in.c, {l.out_channels, 1, 1, l.groups})};
    case LayerKind::kShuffle:
      require_divides(i, l, l.groups, in.c);
      return {in, 0};
    case LayerKind::kBottleneck: {
      need_out();
      if (l.stride != 1 && l.stride != 2) layer_error(i, l, "stride must be 1 or 2");
      if (l.expansion < 1) layer_error(i, l, "expansion must be >= 1");
      require_divides(i, l, l.groups, in.c);
      require_divides(i, l, l.groups, l.out_channels);
      auto [h, w] = spatial(l.kernel, l.stride);
      return {{in.n, l.out_channels, h, w}, bottleneck_param_count(in.c, as_bottleneck(l))};
    }
    case LayerKind::kSeparable: {
      need_out();
      auto [h, w] = spatial(l.kernel, l.stride);
      return {{in.n, l.out_channels, h, w}, separable_param_count(in.c, l.out_channels, l.kernel)};
    }
    case LayerKind::kUpsample:
      return {{in.n, in.c, in.h * 2, in.w * 2}, 0};
    case LayerKind::kConcat: {
      if (l.source < 0 || static_cast<std::size_t>(l.source) >= i) {
        layer_error(i, l, "skip source " + std::to_string(l.source) + " must be an earlier layer");
      }
      const Shape& s = earlier[static_cast<std::size_t>(l.source)];
      if (s.h != in.h || s.w != in.w) {
        layer_error(i, l, "skip source " + std::to_string(l.source) + " resolution " +
                              std::to_string(s.h) + "x" + std::to_string(s.w) +
                              " differs from merge point " + std::to_string(in.h) + "x" +
                              std::to_string(in.w));
      }
      return {{in.n, in.c + s.c, in.h, in.w}, 0};
    }
  }
  layer_error(i, l, "unhandled layer kind");
}

}  // namespace detail

/// Product of all downsampling strides.
inline int total_stride(const NetSpec& net) {
  int s = 1;
  for (const auto& l : net.layers) {
    if (l.kind == LayerKind::kConv || l.kind == LayerKind::kDepthwise ||
        l.kind == LayerKind::kBottleneck || l.kind == LayerKind::kSeparable) {
      s *= l.stride;
    }
  }
  return s;
}

/// Static output shape of every layer for a given input shape. Throws
/// ValidationError naming the first offending layer.
inline std::vector<Shape> propagate_shapes(const NetSpec& net, const Shape& input) {
  if (input.c != net.in_channels) {
    throw ValidationError("input has " + std::to_string(input.c) + " channels, spec expects " +
                          std::to_string(net.in_channels));
  }
  const int stride = total_stride(net);
  if (input.h % stride != 0 || input.w % stride != 0) {
    throw ValidationError("input " + std::to_string(input.h) + "x" + std::to_string(input.w) +
                          " is not divisible by the total encoder stride " + std::to_string(stride));
  }
  std::vector<Shape> shapes;
  Shape cur = input;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    cur = detail::layer_shape(i, net.layers[i], cur, shapes).first;
    shapes.push_back(cur);
  }
  return shapes;
}

/// Weight count of each layer (depends only on channel counts).
inline std::vector<std::size_t> layer_param_counts(const NetSpec& net) {
  // Spatial size is irrelevant for weight counts; use a shape every stride
  // pattern accepts by tracking the required multiple.
  const int side = std::max(1, total_stride(net));
  std::vector<Shape> shapes;
  std::vector<std::size_t> counts;
  Shape cur{1, net.in_channels, side, side};
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto [s, n] = detail::layer_shape(i, net.layers[i], cur, shapes);
    counts.push_back(n);
    shapes.push_back(s);
    cur = s;
  }
  return counts;
}

inline std::size_t count_params(const NetSpec& net) {
  std::size_t total = 0;
  for (auto n : layer_param_counts(net)) total += n;
  return total;
}

/// Flat weight vector plus the [offset, offset+length) slice of each layer.
struct NetWeights {
  std::vector<float> flat;
  std::vector<std::pair<std::size_t, std::size_t>> slices;  // (offset, length)

  std::span<const float> layer(std::size_t i) const {
    return std::span<const float>(flat).subspan(slices[i].first, slices[i].second);
  }
};

inline NetWeights layout_weights(const NetSpec& net) {
  NetWeights w;
  std::size_t off = 0;
  for (auto n : layer_param_counts(net)) {
    w.slices.emplace_back(off, n);
    off += n;
  }
  w.flat.assign(off, 0.0f);
  return w;
}

/// Seeded uniform He initialisation, U(-a, a) with a = sqrt(6 / fan_in).
inline NetWeights init_weights(const NetSpec& net, std::uint64_t seed = 0) {
  NetWeights w = layout_weights(net);
  std::mt19937_64 rng(seed);
  auto uniform = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  Shape cur{1, net.in_channels, 1, 1};
  std::vector<Shape> shapes;
  const int side = std::max(1, total_stride(net));
  cur.h = cur.w = side;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    int fan_in = cur.c * l.kernel * l.kernel / std::max(1, l.groups);
    if (l.kind == LayerKind::kPointwise) fan_in = cur.c / std::max(1, l.groups);
    if (l.kind == LayerKind::kDepthwise) fan_in = l.kernel * l.kernel;
    if (l.kind == LayerKind::kBottleneck || l.kind == LayerKind::kSeparable) fan_in = cur.c;
    const double a = std::sqrt(6.0 / std::max(1, fan_in));
    auto [off, len] = w.slices[i];
    for (std::size_t j = 0; j < len; ++j) {
      w.flat[off + j] = static_cast<float>((2.0 * uniform() - 1.0) * a);
    }
    cur = detail::layer_shape(i, l, cur, shapes).first;
    shapes.push_back(cur);
  }
  return w;
}

/// Runs the network. When `observed` is given it receives every layer's
/// actual output shape.
inline Tensor4 forward(const Tensor4& x, const NetSpec& net, const NetWeights& weights,
                       std::vector<Shape>* observed = nullptr) {
  const auto expected = propagate_shapes(net, x.shape());
  if (weights.slices.size() != net.layers.size()) {
    throw ValidationError("weights describe " + std::to_string(weights.slices.size()) +
                          " layers, spec has " + std::to_string(net.layers.size()));
  }
  std::vector<Tensor4> outputs;
  outputs.reserve(net.layers.size());
  const Tensor4* cur = &x;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    const auto w = weights.layer(i);
    Tensor4 y;
    switch (l.kind) {
      case LayerKind::kConv:
        y = conv2d(*cur, w, {l.out_channels, l.kernel, l.stride, l.groups});
        break;
      case LayerKind::kDepthwise:
        y = conv2d(*cur, w, {cur->c(), l.kernel, l.stride, cur->c()});
        break;
      case LayerKind::kPointwise:
        y = conv2d(*cur, w, {l.out_channels, 1, 1, l.groups});
        break;
      case LayerKind::kShuffle:
        y = channel_shuffle(*cur, l.groups);
        break;
      case LayerKind::kBottleneck:
        y = inverted_bottleneck(*cur, w, detail::as_bottleneck(l));
        break;
      case LayerKind::kSeparable: {
        const std::size_t dw = static_cast<std::size_t>(l.kernel) * l.kernel * cur->c();
        y = conv2d(*cur, w.first(dw), {cur->c(), l.kernel, l.stride, cur->c()});
        if (l.relu) y = relu(std::move(y));
        y = conv2d(y, w.subspan(dw), {l.out_channels, 1, 1, 1});
        break;
      }
      case LayerKind::kUpsample:
        y = upsample2x(*cur);
        break;
      case LayerKind::kConcat:
        y = concat_channels(*cur, outputs[static_cast<std::size_t>(l.source)]);
        break;
    }
    const bool activates = l.kind == LayerKind::kConv || l.kind == LayerKind::kDepthwise ||
                           l.kind == LayerKind::kPointwise || l.kind == LayerKind::kSeparable;
    if (activates && l.relu) y = relu(std::move(y));
    if (y.shape() != expected[i]) {
      detail::layer_error(i, l, "produced " + to_string(y.shape()) + ", expected " +
                                    to_string(expected[i]));
    }
    if (observed) observed->push_back(y.shape());
    outputs.push_back(std::move(y));
    cur = &outputs.back();
  }
  return outputs.empty() ? x : outputs.back();
}

/// Two-class segmentation forward pass: output must be N x 2 x H x W at the
/// input resolution.
inline Tensor4 connectnet_forward(const Tensor4& x, const NetSpec& net, const NetWeights& weights,
                                  std::vector<Shape>* observed = nullptr) {
  const auto shapes = propagate_shapes(net, x.shape());
  const Shape want{x.n(), 2, x.h(), x.w()};
  if (shapes.empty() || shapes.back() != want) {
    throw ValidationError("network output " + (shapes.empty() ? to_string(x.shape()) : to_string(shapes.back())) +
                          " is not the class-score shape " + to_string(want));
  }
  return forward(x, net, weights, observed);
}

/// Softmax probability of class 1 (person) for image `n`, row-major H x W.
inline std::vector<double> person_probability(const Tensor4& scores, int n = 0) {
  if (scores.c() != 2) throw ValidationError("person_probability needs 2 class channels");
  std::vector<double> p(static_cast<std::size_t>(scores.h()) * scores.w());
  for (int y = 0; y < scores.h(); ++y) {
    for (int x = 0; x < scores.w(); ++x) {
      const double d = static_cast<double>(scores.at(n, 0, y, x)) - scores.at(n, 1, y, x);
      p[static_cast<std::size_t>(y) * scores.w() + x] = 1.0 / (1.0 + std::exp(d));
    }
  }
  return p;
}

/// Default reconstruction: stem conv, four stride-2 stages of inverted
/// bottlenecks with channel shuffle, and a depthwise-separable decoder with
/// bilinear x2 upsampling and one skip from the stride-4 stage.
inline NetSpec default_netspec() {
  using K = LayerKind;
  NetSpec net;
  net.in_channels = 3;
  auto conv = [](int out, int k, int s) { return LayerSpec{K::kConv, out, k, s, 1, 1, true, -1}; };
  auto bneck = [](int out, int e, int s, int g) {
    return LayerSpec{K::kBottleneck, out, 3, s, g, e, true, -1};
  };
  auto sep = [](int out) { return LayerSpec{K::kSeparable, out, 3, 1, 1, 1, true, -1}; };
  auto up = [] { return LayerSpec{K::kUpsample, 0, 1, 1, 1, 1, false, -1}; };

  net.layers = {
      conv(16, 3, 1),        // 0  H
      bneck(24, 2, 2, 2),    // 1  H/2
      bneck(24, 3, 1, 2),    // 2
      bneck(32, 3, 2, 2),    // 3  H/4
      bneck(32, 3, 1, 2),    // 4  skip source
      bneck(64, 3, 2, 2),    // 5  H/8
      bneck(64, 3, 1, 2),    // 6
      bneck(64, 3, 1, 2),    // 7
      bneck(96, 3, 2, 2),    // 8  H/16
      bneck(96, 3, 1, 2),    // 9
      bneck(96, 3, 1, 2),    // 10
      up(),                  // 11 H/8
      sep(64),               // 12
      up(),                  // 13 H/4
      LayerSpec{K::kConcat, 0, 1, 1, 1, 1, false, 4},  // 14
      sep(48),               // 15
      up(),                  // 16 H/2
      sep(32),               // 17
      up(),                  // 18 H
      LayerSpec{K::kPointwise, 2, 1, 1, 1, 1, false, -1},  // 19 class scores
  };
  return net;
}

// ---------------------------------------------------------------------------
// Serialisation.

inline nlohmann::json to_json(const NetSpec& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers) {
    nlohmann::json j{{"type", kind_name(l.kind)}};
    switch (l.kind) {
      case LayerKind::kConv:
        j.update({{"out", l.out_channels}, {"kernel", l.kernel}, {"stride", l.stride},
                  {"groups", l.groups}, {"relu", l.relu}});
        break;
      case LayerKind::kDepthwise:
        j.update({{"kernel", l.kernel}, {"stride", l.stride}, {"relu", l.relu}});
        break;
      case LayerKind::kPointwise:
        j.update({{"out", l.out_channels}, {"groups", l.groups}, {"relu", l.relu}});
        break;
      case LayerKind::kShuffle:
        j["groups"] = l.groups;
        break;
      case LayerKind::kBottleneck:
        j.update({{"out", l.out_channels}, {"expansion", l.expansion}, {"kernel", l.kernel},
                  {"stride", l.stride}, {"groups", l.groups}});
        break;
      case LayerKind::kSeparable:
        j.update({{"out", l.out_channels}, {"kernel", l.kernel}, {"stride", l.stride},
                  {"relu", l.relu}});
        break;
      case LayerKind::kUpsample:
        break;
      case LayerKind::kConcat:
        j["source"] = l.source;
        break;
    }
    layers.push_back(std::move(j));
  }
  return {{"in_channels", net.in_channels}, {"layers", std::move(layers)}};
}

inline NetSpec netspec_from_json(const nlohmann::json& j) {
  NetSpec net;
  try {
    net.in_channels = j.value("in_channels", 3);
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.kind = parse_kind(lj.at("type").get<std::string>());
      l.out_channels = lj.value("out", 0);
      l.kernel = lj.value("kernel", l.kind == LayerKind::kPointwise ? 1 : 3);
      if (l.kind == LayerKind::kPointwise || l.kind == LayerKind::kShuffle ||
          l.kind == LayerKind::kUpsample || l.kind == LayerKind::kConcat) {
        l.kernel = 1;
      }
      l.stride = lj.value("stride", 1);
      l.groups = lj.value("groups", 1);
      l.expansion = lj.value("expansion", 1);
      l.relu = lj.value("relu", l.kind != LayerKind::kShuffle && l.kind != LayerKind::kUpsample &&
                                    l.kind != LayerKind::kConcat);
      l.source = lj.value("source", -1);
      net.layers.push_back(l);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("net spec schema error: ") + e.what());
  }
  if (net.in_channels < 1) throw ValidationError("net spec in_channels must be >= 1");
  layer_param_counts(net);  // validates channel arithmetic
  return net;
}

/// Flat little-endian float32 file plus a JSON sidecar with per-layer
/// offset/length (in floats).
inline void save_weights(const std::filesystem::path& bin, const std::filesystem::path& sidecar,
                         const NetSpec& net, const NetWeights& w) {
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw IoError("cannot write weights " + bin.string());
  for (float v : w.flat) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    if constexpr (std::endian::native != std::endian::little) bits = __builtin_bswap32(bits);
    out.write(reinterpret_cast<const char*>(&bits), 4);
  }
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t i = 0; i < w.slices.size(); ++i) {
    layers.push_back({{"index", i}, {"type", kind_name(net.layers[i].kind)},
                      {"offset", w.slices[i].first}, {"length", w.slices[i].second}});
  }
  std::ofstream side(sidecar);
  if (!side) throw IoError("cannot write weight sidecar " + sidecar.string());
  side << nlohmann::json{{"total", w.flat.size()}, {"dtype", "float32-le"}, {"layers", layers}}.dump(2)
       << "\n";
}

inline NetWeights load_weights(const std::filesystem::path& bin,
                               const std::filesystem::path& sidecar, const NetSpec& net) {
  NetWeights w = layout_weights(net);
  std::ifstream side(sidecar);
  if (!side) throw IoError("cannot open weight sidecar " + sidecar.string());
  nlohmann::json j;
  try {
    side >> j;
    const auto& layers = j.at("layers");
    if (layers.size() != w.slices.size()) {
      throw ValidationError("weight sidecar lists " + std::to_string(layers.size()) +
                            " layers, spec has " + std::to_string(w.slices.size()));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto off = layers[i].at("offset").get<std::size_t>();
      const auto len = layers[i].at("length").get<std::size_t>();
      if (len != w.slices[i].second) {
        throw ValidationError("layer " + std::to_string(i) + " weight length " +
                              std::to_string(len) + " != spec " +
                              std::to_string(w.slices[i].second));
      }
      w.slices[i].first = off;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("weight sidecar schema error: ") + e.what());
  }
  std::ifstream in(bin, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open weights " + bin.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % 4 != 0) throw IoError("weights file size is not a multiple of 4");
  in.seekg(0);
  std::vector<std::uint32_t> raw(bytes / 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  w.flat.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::uint32_t bits = raw[i];
    if constexpr (std::endian::native != std::endian::little) bits = __builtin_bswap32(bits);
    w.flat[i] = std::bit_cast<float>(bits);
  }
  for (const auto& [off, len] : w.slices) {
    if (off + len > w.flat.size()) throw IoError("weight slice exceeds file " + bin.string());
  }
  return w;
}

}  // namespace scl::nn
