#include "emcad/oracle.hpp"

#include "emcad/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace emcad::oracle {

namespace {

Tensor4D like(const Tensor4D &t) { return Tensor4D(t.shape()); }

void same_shape(const Tensor4D &a, const Tensor4D &b, const char *what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string("oracle ") + what + ": " +
                     to_string(a.shape()) + " vs " + to_string(b.shape()));
}

} // namespace

Tensor4D conv2d(const Tensor4D &in, const ConvParams &p) {
  const int oh = (in.h() + 2 * p.padding - p.kernel_h) / p.stride + 1;
  const int ow = (in.w() + 2 * p.padding - p.kernel_w) / p.stride + 1;
  const int in_per_group = p.in_channels / p.groups;
  const int out_per_group = p.out_channels / p.groups;
  Tensor4D out(in.n(), p.out_channels, oh, ow);
  for (int b = 0; b < in.n(); ++b)
    for (int oc = 0; oc < p.out_channels; ++oc)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          double acc = p.bias ? (*p.bias)[oc] : 0.0;
          const int group = oc / out_per_group;
          for (int j = 0; j < in_per_group; ++j)
            for (int ky = 0; ky < p.kernel_h; ++ky)
              for (int kx = 0; kx < p.kernel_w; ++kx) {
                const int iy = y * p.stride - p.padding + ky;
                const int ix = x * p.stride - p.padding + kx;
                if (iy < 0 || iy >= in.h() || ix < 0 || ix >= in.w())
                  continue;
                acc += static_cast<double>(p.weights.at(oc, j, ky, kx)) *
                       in.at(b, group * in_per_group + j, iy, ix);
              }
          out.at(b, oc, y, x) = static_cast<float>(acc);
        }
  return out;
}

Tensor4D batchnorm(const Tensor4D &in, const NormParams &p) {
  Tensor4D out = like(in);
  for (int b = 0; b < in.n(); ++b)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < in.h(); ++y)
        for (int x = 0; x < in.w(); ++x) {
          const double norm = (in.at(b, c, y, x) - p.running_mean[c]) /
                              std::sqrt(double{p.running_var[c]} + p.eps);
          out.at(b, c, y, x) =
              static_cast<float>(p.gamma[c] * norm + p.beta[c]);
        }
  return out;
}

Tensor4D adaptive_pool(const Tensor4D &in, PoolMode mode) {
  Tensor4D out(in.n(), in.c(), 1, 1);
  for (int b = 0; b < in.n(); ++b)
    for (int c = 0; c < in.c(); ++c) {
      double best = -std::numeric_limits<double>::infinity(), sum = 0.0;
      for (int y = 0; y < in.h(); ++y)
        for (int x = 0; x < in.w(); ++x) {
          best = std::max(best, double{in.at(b, c, y, x)});
          sum += in.at(b, c, y, x);
        }
      out.at(b, c, 0, 0) = static_cast<float>(
          mode == PoolMode::Max ? best : sum / (in.h() * in.w()));
    }
  return out;
}

Tensor4D channel_pool(const Tensor4D &in, PoolMode mode) {
  Tensor4D out(in.n(), 1, in.h(), in.w());
  for (int b = 0; b < in.n(); ++b)
    for (int y = 0; y < in.h(); ++y)
      for (int x = 0; x < in.w(); ++x) {
        double best = -std::numeric_limits<double>::infinity(), sum = 0.0;
        for (int c = 0; c < in.c(); ++c) {
          best = std::max(best, double{in.at(b, c, y, x)});
          sum += in.at(b, c, y, x);
        }
        out.at(b, 0, y, x) =
            static_cast<float>(mode == PoolMode::Max ? best : sum / in.c());
      }
  return out;
}

Tensor4D upsample_nearest2x(const Tensor4D &in) {
  Tensor4D out(in.n(), in.c(), 2 * in.h(), 2 * in.w());
  for (int b = 0; b < in.n(); ++b)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < out.h(); ++y)
        for (int x = 0; x < out.w(); ++x)
          out.at(b, c, y, x) = in.at(b, c, y / 2, x / 2);
  return out;
}

Tensor4D resize_bilinear(const Tensor4D &in, int out_h, int out_w) {
  Tensor4D out(in.n(), in.c(), out_h, out_w);
  // Source coordinate of an output pixel centre, clamped to the first pixel.
  auto source = [](int o, int in_len, int out_len) {
    const double s = (o + 0.5) * in_len / out_len - 0.5;
    return std::max(s, 0.0);
  };
  for (int b = 0; b < in.n(); ++b)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
          const double sy = source(y, in.h(), out_h);
          const double sx = source(x, in.w(), out_w);
          const int y0 = std::min(static_cast<int>(sy), in.h() - 1);
          const int x0 = std::min(static_cast<int>(sx), in.w() - 1);
          const int y1 = std::min(y0 + 1, in.h() - 1);
          const int x1 = std::min(x0 + 1, in.w() - 1);
          const double fy = sy - y0, fx = sx - x0;
          const double top =
              in.at(b, c, y0, x0) * (1 - fx) + in.at(b, c, y0, x1) * fx;
          const double bottom =
              in.at(b, c, y1, x0) * (1 - fx) + in.at(b, c, y1, x1) * fx;
          out.at(b, c, y, x) = static_cast<float>(top * (1 - fy) + bottom * fy);
        }
  return out;
}

Tensor4D channel_shuffle(const Tensor4D &in, int groups) {
  // Reshape (g, c/g) -> transpose -> flatten, enumerated from the source side.
  const int per = in.c() / groups;
  Tensor4D out = like(in);
  for (int b = 0; b < in.n(); ++b)
    for (int g = 0; g < groups; ++g)
      for (int j = 0; j < per; ++j)
        for (int y = 0; y < in.h(); ++y)
          for (int x = 0; x < in.w(); ++x)
            out.at(b, j * groups + g, y, x) = in.at(b, g * per + j, y, x);
  return out;
}

Tensor4D relu(const Tensor4D &in) {
  Tensor4D out = like(in);
  for (std::size_t i = 0; i < in.size(); ++i)
    out.values()[i] = in.values()[i] > 0.0f ? in.values()[i] : 0.0f;
  return out;
}

Tensor4D relu6(const Tensor4D &in) {
  Tensor4D out = like(in);
  for (std::size_t i = 0; i < in.size(); ++i)
    out.values()[i] = std::clamp(in.values()[i], 0.0f, 6.0f);
  return out;
}

Tensor4D sigmoid(const Tensor4D &in) {
  Tensor4D out = like(in);
  for (std::size_t i = 0; i < in.size(); ++i)
    out.values()[i] = static_cast<float>(
        1.0 / (1.0 + std::exp(-static_cast<double>(in.values()[i]))));
  return out;
}

Tensor4D add(const Tensor4D &a, const Tensor4D &b) {
  same_shape(a, b, "add");
  Tensor4D out = like(a);
  for (std::size_t i = 0; i < a.size(); ++i)
    out.values()[i] = a.values()[i] + b.values()[i];
  return out;
}

Tensor4D scale_channels(const Tensor4D &x, const Tensor4D &s) {
  Tensor4D out = like(x);
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < x.h(); ++y)
        for (int i = 0; i < x.w(); ++i)
          out.at(b, c, y, i) = x.at(b, c, y, i) * s.at(b, c, 0, 0);
  return out;
}

Tensor4D scale_pixels(const Tensor4D &x, const Tensor4D &s) {
  Tensor4D out = like(x);
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < x.h(); ++y)
        for (int i = 0; i < x.w(); ++i)
          out.at(b, c, y, i) = x.at(b, c, y, i) * s.at(b, 0, y, i);
  return out;
}

Tensor4D gate(const GateParams &p, const Tensor4D &g, const Tensor4D &x) {
  const Tensor4D g1 = oracle::batchnorm(oracle::conv2d(g, p.gc_g), p.bn_g);
  const Tensor4D x1 = oracle::batchnorm(oracle::conv2d(x, p.gc_x), p.bn_x);
  const Tensor4D psi = oracle::batchnorm(oracle::conv2d(oracle::relu(oracle::add(g1, x1)), p.psi), p.bn_psi);
  return oracle::scale_pixels(x, oracle::sigmoid(psi));
}

Tensor4D cab(const CABParams &p, const Tensor4D &x) {
  const Tensor4D mx =
      oracle::conv2d(oracle::relu(oracle::conv2d(oracle::adaptive_pool(x, PoolMode::Max), p.reduce)), p.expand);
  const Tensor4D av =
      oracle::conv2d(oracle::relu(oracle::conv2d(oracle::adaptive_pool(x, PoolMode::Avg), p.reduce)), p.expand);
  return oracle::scale_channels(x, oracle::sigmoid(oracle::add(mx, av)));
}

Tensor4D sab(const SABParams &p, const Tensor4D &x) {
  const Tensor4D mx = oracle::channel_pool(x, PoolMode::Max);
  const Tensor4D av = oracle::channel_pool(x, PoolMode::Avg);
  Tensor4D stacked(x.n(), 2, x.h(), x.w());
  for (int b = 0; b < x.n(); ++b)
    for (int y = 0; y < x.h(); ++y)
      for (int i = 0; i < x.w(); ++i) {
        stacked.at(b, 0, y, i) = mx.at(b, 0, y, i);
        stacked.at(b, 1, y, i) = av.at(b, 0, y, i);
      }
  return oracle::scale_pixels(x, oracle::sigmoid(oracle::conv2d(stacked, p.lkc)));
}

Tensor4D msdc(const MSCBParams &p, const Tensor4D &x) {
  auto branch = [](const DepthwiseBranch &d, const Tensor4D &t) {
    return oracle::relu6(oracle::batchnorm(oracle::conv2d(t, d.conv), d.bn));
  };
  if (p.arrangement == MsdcArrangement::Sequential) {
    Tensor4D cur = x;
    for (const auto &d : p.dwcbs)
      cur = oracle::add(cur, branch(d, cur));
    return cur;
  }
  Tensor4D sum = branch(p.dwcbs[0], x);
  for (std::size_t i = 1; i < p.dwcbs.size(); ++i)
    sum = oracle::add(sum, branch(p.dwcbs[i], x));
  return sum;
}

Tensor4D mscb(const MSCBParams &p, const Tensor4D &x) {
  const Tensor4D ex = oracle::relu6(oracle::batchnorm(oracle::conv2d(x, p.pwc1), p.bn1));
  const Tensor4D mixed = oracle::channel_shuffle(msdc(p, ex), p.shuffle_groups);
  return oracle::batchnorm(oracle::conv2d(mixed, p.pwc2), p.bn2);
}

Tensor4D eucb(const EUCBParams &p, const Tensor4D &x) {
  const Tensor4D up = p.upsample == UpsampleMode::Nearest
                          ? oracle::upsample_nearest2x(x)
                          : oracle::resize_bilinear(x, 2 * x.h(), 2 * x.w());
  return oracle::conv2d(oracle::relu(oracle::batchnorm(oracle::conv2d(up, p.dwc), p.bn)), p.proj);
}

double mutation_enumeration(const PredictionMaps &maps, const Tensor4D &target,
                            const BaseLoss &base) {
  // Membership table in bitmask order 1..15 (column i selects p_{i+1}).
  static constexpr std::array<std::array<int, 4>, 15> kSubsets = {{
      {1, 0, 0, 0}, {0, 1, 0, 0}, {1, 1, 0, 0}, {0, 0, 1, 0}, {1, 0, 1, 0},
      {0, 1, 1, 0}, {1, 1, 1, 0}, {0, 0, 0, 1}, {1, 0, 0, 1}, {0, 1, 0, 1},
      {1, 1, 0, 1}, {0, 0, 1, 1}, {1, 0, 1, 1}, {0, 1, 1, 1}, {1, 1, 1, 1},
  }};
  // Resizing is shared with the library; the subset walk is what is checked.
  const PredictionMaps resized = resize_maps(maps, target.h(), target.w());
  double total = 0.0;
  for (const auto &subset : kSubsets) {
    Tensor4D acc;
    for (int i = 0; i < 4; ++i) {
      if (!subset[i])
        continue;
      if (acc.empty()) {
        acc = resized.p[i];
        continue;
      }
      for (std::size_t e = 0; e < acc.size(); ++e)
        acc.values()[e] += resized.p[i].values()[e];
    }
    total += base(acc, target);
  }
  return total;
}

double hd95_pairwise(const Tensor4D &a, const Tensor4D &b) {
  // Boundary = mask minus its 3x3 erosion, with zero padding outside.
  auto edge_points = [](const Tensor4D &m) {
    std::vector<std::pair<int, int>> pts;
    for (int y = 0; y < m.h(); ++y)
      for (int x = 0; x < m.w(); ++x) {
        if (m.at(0, 0, y, x) <= 0.5f)
          continue;
        bool eroded = true;
        for (int yy = y - 1; yy <= y + 1; ++yy)
          for (int xx = x - 1; xx <= x + 1; ++xx) {
            const bool inside = yy >= 0 && yy < m.h() && xx >= 0 && xx < m.w();
            if (!inside || m.at(0, 0, yy, xx) <= 0.5f)
              eroded = false;
          }
        if (!eroded)
          pts.emplace_back(y, x);
      }
    return pts;
  };
  const auto pa = edge_points(a), pb = edge_points(b);
  if (pa.empty() || pb.empty())
    return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> all;
  auto nearest = [&](const auto &from, const auto &to) {
    for (const auto &[y, x] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto &[v, u] : to)
        best = std::min(best, std::hypot(double(y - v), double(x - u)));
      all.push_back(best);
    }
  };
  nearest(pa, pb);
  nearest(pb, pa);
  std::sort(all.begin(), all.end());
  const double rank = 0.95 * (all.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  if (lo + 1 >= all.size())
    return all.back();
  return all[lo] + (rank - lo) * (all[lo + 1] - all[lo]);
}

double max_abs_diff(const Tensor4D &a, const Tensor4D &b) {
  if (a.shape() != b.shape())
    return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(double{a.values()[i]} - b.values()[i]);
    if (std::isnan(d))
      return std::numeric_limits<double>::infinity();
    worst = std::max(worst, d);
  }
  return worst;
}

} // namespace emcad::oracle
