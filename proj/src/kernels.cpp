#include "emcad/kernels.hpp"

#include "emcad/errors.hpp"
#include "emcad/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace emcad {

namespace {

std::string conv_desc(const ConvParams &p) {
  return "conv " + std::to_string(p.in_channels) + "->" +
         std::to_string(p.out_channels) + " k" + std::to_string(p.kernel_h) +
         "x" + std::to_string(p.kernel_w) + " g" + std::to_string(p.groups);
}

template <typename F> Tensor4D map_elements(const Tensor4D &input, F f) {
  Tensor4D out(input.shape());
  auto src = input.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = f(src[i]);
  return out;
}

// out[oy, :] += wv * in[iy, ox*stride - padding + kx] over the valid x range.
void accumulate_tap(const float *in, int in_h, int in_w, float *out, int out_h,
                    int out_w, int stride, int padding, int ky, int kx,
                    float wv) {
  // Valid ox satisfy 0 <= ox*stride - padding + kx < in_w.
  const int off = kx - padding;
  int ox_lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  int ox_hi = (in_w - 1 - off) >= 0 ? (in_w - 1 - off) / stride + 1 : 0;
  ox_hi = std::min(ox_hi, out_w);
  if (ox_lo >= ox_hi)
    return;
  for (int oy = 0; oy < out_h; ++oy) {
    const int iy = oy * stride - padding + ky;
    if (iy < 0 || iy >= in_h)
      continue;
    const float *in_row = in + static_cast<std::size_t>(iy) * in_w;
    float *out_row = out + static_cast<std::size_t>(oy) * out_w;
    if (stride == 1) {
      const float *src = in_row + off;
      for (int ox = ox_lo; ox < ox_hi; ++ox)
        out_row[ox] += wv * src[ox];
    } else {
      for (int ox = ox_lo; ox < ox_hi; ++ox)
        out_row[ox] += wv * in_row[ox * stride + off];
    }
  }
}

} // namespace

ConvParams ConvParams::make(int in_channels, int out_channels, int kernel,
                            int groups, bool with_bias) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || groups < 1)
    throw ConfigError("convolution extents must be positive");
  if (in_channels % groups != 0 || out_channels % groups != 0)
    throw ConfigError("groups=" + std::to_string(groups) +
                      " must divide in_channels=" +
                      std::to_string(in_channels) +
                      " and out_channels=" + std::to_string(out_channels));
  ConvParams p;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.kernel_h = kernel;
  p.kernel_w = kernel;
  p.stride = 1;
  p.padding = kernel / 2;
  p.groups = groups;
  p.weights = Tensor4D(out_channels, in_channels / groups, kernel, kernel);
  if (with_bias)
    p.bias = std::vector<float>(static_cast<std::size_t>(out_channels), 0.0f);
  return p;
}

void ConvParams::validate() const {
  if (in_channels < 1 || out_channels < 1 || kernel_h < 1 || kernel_w < 1 ||
      stride < 1 || padding < 0 || groups < 1)
    throw ConfigError(conv_desc(*this) + ": extents must be positive");
  if (in_channels % groups != 0 || out_channels % groups != 0)
    throw ConfigError(conv_desc(*this) +
                      ": groups must divide both channel counts");
  const Shape expect{out_channels, in_channels / groups, kernel_h, kernel_w};
  if (weights.shape() != expect)
    throw ConfigError(conv_desc(*this) + ": weight shape " +
                      to_string(weights.shape()) + " != " + to_string(expect));
  if (bias && bias->size() != static_cast<std::size_t>(out_channels))
    throw ConfigError(conv_desc(*this) + ": bias length mismatch");
}

NormParams NormParams::identity(int channels, float eps) {
  if (channels < 1)
    throw ConfigError("batch norm needs at least one channel");
  const auto c = static_cast<std::size_t>(channels);
  return NormParams{std::vector<float>(c, 1.0f), std::vector<float>(c, 0.0f),
                    std::vector<float>(c, 0.0f), std::vector<float>(c, 1.0f),
                    eps};
}

void NormParams::validate() const {
  const auto c = gamma.size();
  if (c == 0 || beta.size() != c || running_mean.size() != c ||
      running_var.size() != c)
    throw ConfigError("batch norm vectors must share a non-zero length");
  if (!(eps >= 0.0f))
    throw ConfigError("batch norm eps must be non-negative");
  for (float v : running_var)
    if (!(v >= 0.0f))
      throw ConfigError("batch norm running_var must be non-negative");
}

Tensor4D conv2d(const Tensor4D &input, const ConvParams &p) {
  p.validate();
  if (input.c() != p.in_channels)
    throw ShapeError(conv_desc(p) + ": input has " +
                     std::to_string(input.c()) + " channels");
  const int in_h = input.h(), in_w = input.w();
  if (in_h + 2 * p.padding < p.kernel_h || in_w + 2 * p.padding < p.kernel_w)
    throw ShapeError(conv_desc(p) + ": kernel larger than padded input " +
                     to_string(input.shape()));
  const int out_h = p.out_extent(in_h, p.kernel_h);
  const int out_w = p.out_extent(in_w, p.kernel_w);
  Tensor4D out(input.n(), p.out_channels, out_h, out_w);

  const int in_per_group = p.in_channels / p.groups;
  const int out_per_group = p.out_channels / p.groups;
  const bool fast_pointwise =
      p.is_pointwise() && p.stride == 1 && p.padding == 0;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  const std::size_t jobs = static_cast<std::size_t>(input.n()) * p.out_channels;
  const std::size_t work =
      out_plane * in_per_group * p.kernel_h * p.kernel_w;

  parallel_for(jobs, work, [&](std::size_t job) {
    const int b = static_cast<int>(job / p.out_channels);
    const int oc = static_cast<int>(job % p.out_channels);
    const int g = oc / out_per_group;
    float *dst = out.plane(b, oc).data();
    const float init = p.bias ? (*p.bias)[oc] : 0.0f;
    std::fill(dst, dst + out_plane, init);
    for (int icg = 0; icg < in_per_group; ++icg) {
      const int ic = g * in_per_group + icg;
      const float *src = input.plane(b, ic).data();
      if (fast_pointwise) {
        const float wv = p.weights.at(oc, icg, 0, 0);
        for (std::size_t i = 0; i < out_plane; ++i)
          dst[i] += wv * src[i];
        continue;
      }
      for (int ky = 0; ky < p.kernel_h; ++ky)
        for (int kx = 0; kx < p.kernel_w; ++kx)
          accumulate_tap(src, in_h, in_w, dst, out_h, out_w, p.stride,
                         p.padding, ky, kx, p.weights.at(oc, icg, ky, kx));
    }
  });
  return out;
}

Tensor4D batchnorm_infer(const Tensor4D &input, const NormParams &p) {
  p.validate();
  if (input.c() != p.channels())
    throw ShapeError("batch norm over " + std::to_string(p.channels()) +
                     " channels applied to " + to_string(input.shape()));
  Tensor4D out(input.shape());
  for (int ch = 0; ch < input.c(); ++ch) {
    const float scale = static_cast<float>(
        p.gamma[ch] / std::sqrt(static_cast<double>(p.running_var[ch]) + p.eps));
    const float mean = p.running_mean[ch];
    const float shift = p.beta[ch];
    for (int b = 0; b < input.n(); ++b) {
      auto src = input.plane(b, ch);
      auto dst = out.plane(b, ch);
      for (std::size_t i = 0; i < src.size(); ++i)
        dst[i] = (src[i] - mean) * scale + shift;
    }
  }
  return out;
}

Tensor4D relu(const Tensor4D &input) {
  return map_elements(input, [](float v) { return v > 0.0f ? v : 0.0f; });
}

Tensor4D relu6(const Tensor4D &input) {
  return map_elements(input,
                      [](float v) { return std::clamp(v, 0.0f, 6.0f); });
}

float sigmoid(float x) noexcept {
  return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x))));
}

Tensor4D sigmoid(const Tensor4D &input) {
  return map_elements(input, [](float v) { return sigmoid(v); });
}

Tensor4D adaptive_pool_1x1(const Tensor4D &input, PoolMode mode) {
  Tensor4D out(input.n(), input.c(), 1, 1);
  for (int b = 0; b < input.n(); ++b)
    for (int ch = 0; ch < input.c(); ++ch) {
      auto src = input.plane(b, ch);
      if (mode == PoolMode::Max) {
        out.at(b, ch, 0, 0) = *std::max_element(src.begin(), src.end());
      } else {
        double sum = 0.0;
        for (float v : src)
          sum += v;
        out.at(b, ch, 0, 0) = static_cast<float>(sum / src.size());
      }
    }
  return out;
}

Tensor4D channel_pool(const Tensor4D &input, PoolMode mode) {
  Tensor4D out(input.n(), 1, input.h(), input.w());
  const std::size_t plane = input.shape().plane();
  std::vector<double> acc(plane);
  for (int b = 0; b < input.n(); ++b) {
    auto dst = out.plane(b, 0);
    if (mode == PoolMode::Max) {
      auto first = input.plane(b, 0);
      std::copy(first.begin(), first.end(), dst.begin());
      for (int ch = 1; ch < input.c(); ++ch) {
        auto src = input.plane(b, ch);
        for (std::size_t i = 0; i < plane; ++i)
          dst[i] = std::max(dst[i], src[i]);
      }
    } else {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int ch = 0; ch < input.c(); ++ch) {
        auto src = input.plane(b, ch);
        for (std::size_t i = 0; i < plane; ++i)
          acc[i] += src[i];
      }
      for (std::size_t i = 0; i < plane; ++i)
        dst[i] = static_cast<float>(acc[i] / input.c());
    }
  }
  return out;
}

Tensor4D upsample2x(const Tensor4D &input, UpsampleMode mode) {
  if (mode == UpsampleMode::Bilinear)
    return resize_bilinear(input, 2 * input.h(), 2 * input.w());
  Tensor4D out(input.n(), input.c(), 2 * input.h(), 2 * input.w());
  for (int b = 0; b < input.n(); ++b)
    for (int ch = 0; ch < input.c(); ++ch)
      for (int y = 0; y < out.h(); ++y)
        for (int x = 0; x < out.w(); ++x)
          out.at(b, ch, y, x) = input.at(b, ch, y / 2, x / 2);
  return out;
}

Tensor4D resize_bilinear(const Tensor4D &input, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1)
    throw ShapeError("bilinear resize target must be positive");
  if (out_h == input.h() && out_w == input.w())
    return input;
  const int in_h = input.h(), in_w = input.w();
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;

  struct Tap {
    int i0, i1;
    float l0, l1;
  };
  auto taps = [](int out_n, int in_n, double scale) {
    std::vector<Tap> t(static_cast<std::size_t>(out_n));
    for (int o = 0; o < out_n; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      if (src < 0.0)
        src = 0.0;
      const int i0 = std::min(static_cast<int>(src), in_n - 1);
      const int i1 = i0 < in_n - 1 ? i0 + 1 : i0;
      const auto l1 = static_cast<float>(src - i0);
      t[o] = Tap{i0, i1, 1.0f - l1, l1};
    }
    return t;
  };
  const auto ty = taps(out_h, in_h, sy);
  const auto tx = taps(out_w, in_w, sx);

  Tensor4D out(input.n(), input.c(), out_h, out_w);
  for (int b = 0; b < input.n(); ++b)
    for (int ch = 0; ch < input.c(); ++ch)
      for (int y = 0; y < out_h; ++y) {
        const Tap &vy = ty[y];
        for (int x = 0; x < out_w; ++x) {
          const Tap &vx = tx[x];
          out.at(b, ch, y, x) =
              vy.l0 * (vx.l0 * input.at(b, ch, vy.i0, vx.i0) +
                       vx.l1 * input.at(b, ch, vy.i0, vx.i1)) +
              vy.l1 * (vx.l0 * input.at(b, ch, vy.i1, vx.i0) +
                       vx.l1 * input.at(b, ch, vy.i1, vx.i1));
        }
      }
  return out;
}

Tensor4D channel_shuffle(const Tensor4D &input, int groups) {
  if (groups < 1 || input.c() % groups != 0)
    throw ConfigError("channel_shuffle: groups=" + std::to_string(groups) +
                      " does not divide " + std::to_string(input.c()) +
                      " channels");
  const int per_group = input.c() / groups;
  Tensor4D out(input.shape());
  for (int b = 0; b < input.n(); ++b)
    for (int g = 0; g < groups; ++g)
      for (int j = 0; j < per_group; ++j) {
        auto src = input.plane(b, g * per_group + j);
        auto dst = out.plane(b, j * groups + g);
        std::copy(src.begin(), src.end(), dst.begin());
      }
  return out;
}

Tensor4D add(const Tensor4D &a, const Tensor4D &b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  Tensor4D out(a.shape());
  auto x = a.values(), y = b.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = x[i] + y[i];
  return out;
}

Tensor4D hadamard(const Tensor4D &a, const Tensor4D &b) {
  const Shape &sa = a.shape(), &sb = b.shape();
  if (sa == sb) {
    Tensor4D out(sa);
    auto x = a.values(), y = b.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i)
      dst[i] = x[i] * y[i];
    return out;
  }
  const bool per_channel =
      sb.n == sa.n && sb.c == sa.c && sb.h == 1 && sb.w == 1;
  const bool per_pixel = sb.n == sa.n && sb.c == 1 && sb.h == sa.h &&
                         sb.w == sa.w;
  if (!per_channel && !per_pixel)
    throw ShapeError("hadamard: cannot broadcast " + to_string(sb) +
                     " onto " + to_string(sa));
  Tensor4D out(sa);
  for (int n = 0; n < sa.n; ++n)
    for (int ch = 0; ch < sa.c; ++ch) {
      auto src = a.plane(n, ch);
      auto dst = out.plane(n, ch);
      if (per_channel) {
        const float s = b.at(n, ch, 0, 0);
        for (std::size_t i = 0; i < src.size(); ++i)
          dst[i] = src[i] * s;
      } else {
        auto m = b.plane(n, 0);
        for (std::size_t i = 0; i < src.size(); ++i)
          dst[i] = src[i] * m[i];
      }
    }
  return out;
}

Tensor4D concat_channels(const Tensor4D &a, const Tensor4D &b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ShapeError("concat: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  Tensor4D out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int n = 0; n < a.n(); ++n) {
    for (int ch = 0; ch < a.c(); ++ch) {
      auto src = a.plane(n, ch);
      std::copy(src.begin(), src.end(), out.plane(n, ch).begin());
    }
    for (int ch = 0; ch < b.c(); ++ch) {
      auto src = b.plane(n, ch);
      std::copy(src.begin(), src.end(), out.plane(n, a.c() + ch).begin());
    }
  }
  return out;
}

} // namespace emcad
