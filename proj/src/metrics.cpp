#include "emcad/metrics.hpp"

#include "emcad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace emcad {

namespace {

struct Overlap {
  double inter = 0, pred = 0, gt = 0;
};

Overlap overlap(const Tensor4D &pred, const Tensor4D &gt) {
  if (pred.shape() != gt.shape())
    throw ShapeError("metric: mask shapes " + to_string(pred.shape()) +
                     " vs " + to_string(gt.shape()));
  Overlap o;
  auto p = pred.values(), g = gt.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] > 0.5f, b = g[i] > 0.5f;
    o.pred += a;
    o.gt += b;
    o.inter += a && b;
  }
  return o;
}

struct Point {
  int y, x;
};

// Foreground pixels with at least one 8-neighbour in background or outside
// the image.
std::vector<Point> boundary(const Tensor4D &m) {
  const int h = m.h(), w = m.w();
  auto fg = [&](int y, int x) {
    return y >= 0 && y < h && x >= 0 && x < w && m.at(0, 0, y, x) > 0.5f;
  };
  std::vector<Point> pts;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!fg(y, x))
        continue;
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy)
        for (int dx = -1; dx <= 1 && !edge; ++dx)
          if ((dy || dx) && !fg(y + dy, x + dx))
            edge = true;
      if (edge)
        pts.push_back({y, x});
    }
  return pts;
}

std::vector<double> directed(const std::vector<Point> &from,
                             const std::vector<Point> &to) {
  std::vector<double> d;
  d.reserve(from.size());
  for (const Point &a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Point &b : to) {
      const double dy = a.y - b.y, dx = a.x - b.x;
      best = std::min(best, dy * dy + dx * dx);
    }
    d.push_back(std::sqrt(best));
  }
  return d;
}

} // namespace

double dice_score(const Tensor4D &pred, const Tensor4D &gt) {
  const Overlap o = overlap(pred, gt);
  if (o.pred + o.gt == 0)
    return 100.0;
  return 100.0 * 2.0 * o.inter / (o.pred + o.gt);
}

double iou_score(const Tensor4D &pred, const Tensor4D &gt) {
  const Overlap o = overlap(pred, gt);
  const double uni = o.pred + o.gt - o.inter;
  if (uni == 0)
    return 100.0;
  return 100.0 * o.inter / uni;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty())
    throw ShapeError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * (values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - lo;
  return values[lo] + (values[hi] - values[lo]) * frac;
}

std::optional<double> hd95(const Tensor4D &pred, const Tensor4D &gt,
                           Hd95Mode mode) {
  if (pred.shape() != gt.shape())
    throw ShapeError("hd95: mask shapes " + to_string(pred.shape()) + " vs " +
                     to_string(gt.shape()));
  if (pred.n() != 1 || pred.c() != 1)
    throw ShapeError("hd95 expects single-slice masks, got " +
                     to_string(pred.shape()));
  const auto bp = boundary(pred);
  const auto bg = boundary(gt);
  if (bp.empty() || bg.empty())
    return std::nullopt;
  auto d_pg = directed(bp, bg);
  auto d_gp = directed(bg, bp);
  if (mode == Hd95Mode::MaxDirected)
    return std::max(percentile(std::move(d_pg), 95.0),
                    percentile(std::move(d_gp), 95.0));
  d_pg.insert(d_pg.end(), d_gp.begin(), d_gp.end());
  return percentile(std::move(d_pg), 95.0);
}

Tensor4D binarize_logits(const Tensor4D &logits) {
  Tensor4D out(logits.shape());
  auto src = logits.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = src[i] > 0.0f ? 1.0f : 0.0f;
  return out;
}

} // namespace emcad
