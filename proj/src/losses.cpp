#include "emcad/losses.hpp"

#include "emcad/errors.hpp"

#include <cmath>
#include <string>

namespace emcad {

namespace {

void require_same_shape(const Tensor4D &a, const Tensor4D &b,
                        const char *what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": prediction " +
                     to_string(a.shape()) + " vs target " +
                     to_string(b.shape()));
}

// Numerically stable log(1 + exp(x)).
double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Mean of a k x k window centred on every pixel, over in-bounds pixels only.
std::vector<double> window_mean(std::span<const float> plane, int h, int w,
                                int k) {
  const int r = k / 2;
  // Summed-area table with a zero border row/column.
  std::vector<double> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
  auto at = [&](int y, int x) -> double & {
    return sat[static_cast<std::size_t>(y) * (w + 1) + x];
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      at(y + 1, x + 1) = plane[static_cast<std::size_t>(y) * w + x] +
                         at(y, x + 1) + at(y + 1, x) - at(y, x);
  std::vector<double> out(plane.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
      const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
      const double sum = at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0);
      out[static_cast<std::size_t>(y) * w + x] =
          sum / ((y1 - y0) * (x1 - x0));
    }
  return out;
}

Tensor4D sum_maps(const PredictionMaps &maps, unsigned mask) {
  Tensor4D acc;
  for (int i = 0; i < 4; ++i) {
    if (!(mask & (1u << i)))
      continue;
    acc = acc.empty() ? maps.p[i] : add(acc, maps.p[i]);
  }
  return acc;
}

} // namespace

void LossWeights::validate() const {
  for (double v : {alpha, beta, gamma, zeta, delta, ce_weight, dice_weight})
    if (!std::isfinite(v))
      throw ConfigError("loss weights must be finite");
}

double bce_iou_weighted(const Tensor4D &logits, const Tensor4D &target,
                        int pooling_window, double boost) {
  require_same_shape(logits, target, "bce_iou");
  if (pooling_window < 1 || pooling_window % 2 == 0)
    throw ConfigError("bce_iou pooling window must be odd and positive");
  double total = 0.0;
  for (int b = 0; b < logits.n(); ++b)
    for (int ch = 0; ch < logits.c(); ++ch) {
      auto z = logits.plane(b, ch);
      auto y = target.plane(b, ch);
      const auto pooled = window_mean(y, target.h(), target.w(), pooling_window);
      double wsum = 0, wbce = 0, inter = 0, uni = 0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double w = 1.0 + boost * std::abs(pooled[i] - y[i]);
        const double zi = z[i], yi = y[i];
        // BCE with logits: softplus(z) - y*z
        const double bce = softplus(zi) - yi * zi;
        const double p = 1.0 / (1.0 + std::exp(-zi));
        wsum += w;
        wbce += w * bce;
        inter += w * p * yi;
        uni += w * (p + yi);
      }
      const double wiou = 1.0 - (inter + 1.0) / (uni - inter + 1.0);
      total += wbce / wsum + wiou;
    }
  return total / (static_cast<double>(logits.n()) * logits.c());
}

double ce_dice_loss(const Tensor4D &logits, const Tensor4D &labels,
                    const LossWeights &w) {
  w.validate();
  const int k = logits.c();
  if (labels.n() != logits.n() || labels.c() != 1 || labels.h() != logits.h() ||
      labels.w() != logits.w())
    throw ShapeError("ce_dice: labels " + to_string(labels.shape()) +
                     " do not match logits " + to_string(logits.shape()));
  const Tensor4D prob = softmax_channels(logits);
  std::vector<double> inter(k, 0.0), psum(k, 0.0), ysum(k, 0.0);
  double ce = 0.0;
  const std::size_t plane = logits.shape().plane();
  for (int b = 0; b < logits.n(); ++b) {
    auto lab = labels.plane(b, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      const float raw = lab[i];
      const int cls = static_cast<int>(raw);
      if (raw != static_cast<float>(cls) || cls < 0 || cls >= k)
        throw ConfigError("ce_dice: label " + std::to_string(raw) +
                          " outside [0, " + std::to_string(k) + ")");
      // log-softmax of the true class
      double mx = logits.plane(b, 0)[i];
      for (int ch = 1; ch < k; ++ch)
        mx = std::max<double>(mx, logits.plane(b, ch)[i]);
      double se = 0.0;
      for (int ch = 0; ch < k; ++ch)
        se += std::exp(logits.plane(b, ch)[i] - mx);
      ce += -(logits.plane(b, cls)[i] - mx - std::log(se));
      for (int ch = 0; ch < k; ++ch) {
        const double p = prob.plane(b, ch)[i];
        const double y = ch == cls ? 1.0 : 0.0;
        inter[ch] += p * y;
        psum[ch] += p;
        ysum[ch] += y;
      }
    }
  }
  ce /= static_cast<double>(logits.n()) * plane;
  double dice = 0.0;
  for (int ch = 0; ch < k; ++ch)
    dice += (2.0 * inter[ch] + 1.0) / (psum[ch] + ysum[ch] + 1.0);
  dice /= k;
  return w.ce_weight * ce + w.dice_weight * (1.0 - dice);
}

PredictionMaps resize_maps(const PredictionMaps &maps, int h, int w) {
  PredictionMaps out;
  for (int i = 0; i < 4; ++i)
    out.p[i] = resize_bilinear(maps.p[i], h, w);
  return out;
}

double additive_loss(const PredictionMaps &maps, const Tensor4D &target,
                     const LossWeights &w, const BaseLoss &base) {
  w.validate();
  const PredictionMaps r = resize_maps(maps, target.h(), target.w());
  const double weights[4] = {w.alpha, w.beta, w.gamma, w.zeta};
  double total = 0.0;
  for (int i = 0; i < 4; ++i)
    if (weights[i] != 0.0)
      total += weights[i] * base(r.p[i], target);
  if (w.delta != 0.0)
    total += w.delta * base(sum_maps(r, 0xF), target);
  return total;
}

double mutation_loss(const PredictionMaps &maps, const Tensor4D &target,
                     const BaseLoss &base, SubsetReduction reduction) {
  const PredictionMaps r = resize_maps(maps, target.h(), target.w());
  double total = 0.0;
  for (unsigned mask = 1; mask < 16; ++mask)
    total += base(sum_maps(r, mask), target);
  return reduction == SubsetReduction::Mean ? total / 15.0 : total;
}

} // namespace emcad
