#include "emcad/errors.hpp"
#include "emcad/losses.hpp"
#include "emcad/metrics.hpp"
#include "emcad/oracle.hpp"
#include "emcad/verify.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace emcad;

namespace {

constexpr double kLn2 = std::numbers::ln2;

BaseLoss bce_iou_base() {
  return [](const Tensor4D &z, const Tensor4D &y) {
    return bce_iou_weighted(z, y);
  };
}

// Scalar cross-entropy + soft DICE written pixel by pixel.
double ce_dice_reference(const Tensor4D &z, const Tensor4D &labels) {
  const int k = z.c();
  double ce = 0;
  std::vector<double> inter(k), ps(k), ys(k);
  for (int b = 0; b < z.n(); ++b)
    for (int y = 0; y < z.h(); ++y)
      for (int x = 0; x < z.w(); ++x) {
        const int cls = static_cast<int>(labels.at(b, 0, y, x));
        double denom = 0;
        for (int c = 0; c < k; ++c)
          denom += std::exp(static_cast<double>(z.at(b, c, y, x)));
        for (int c = 0; c < k; ++c) {
          const double p = std::exp(static_cast<double>(z.at(b, c, y, x))) / denom;
          if (c == cls) {
            ce -= std::log(p);
            inter[c] += p;
            ys[c] += 1;
          }
          ps[c] += p;
        }
      }
  ce /= static_cast<double>(z.n()) * z.h() * z.w();
  double dice = 0;
  for (int c = 0; c < k; ++c)
    dice += (2 * inter[c] + 1) / (ps[c] + ys[c] + 1);
  return 0.3 * ce + 0.7 * (1 - dice / k);
}

PredictionMaps random_maps(Sampler &s, int channels) {
  PredictionMaps m;
  for (int i = 0; i < 4; ++i)
    m.p[i] = random_tensor(s, {2, channels, 2 << i, 2 << i}, -3.0f, 3.0f);
  return m;
}

Tensor4D random_mask(Sampler &s, Shape shape) {
  Tensor4D t(shape);
  for (float &v : t.values())
    v = s.coin() ? 1.0f : 0.0f;
  return t;
}

Tensor4D mask_with(int h, int w, std::initializer_list<std::pair<int, int>> on) {
  Tensor4D t(1, 1, h, w);
  for (auto [y, x] : on)
    t.at(0, 0, y, x) = 1.0f;
  return t;
}

} // namespace

TEST_CASE("bce_iou closed forms") {
  const Tensor4D ones(1, 1, 4, 4, 1.0f);
  CHECK(bce_iou_weighted(Tensor4D(ones.shape(), 50.0f), ones) < 1e-6);

  // Checkerboard with zero logits: every window covers the whole plane, so
  // weights are a uniform 3.5, BCE is ln2 and the soft IoU term is 28/43.
  Tensor4D board(1, 1, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      board.at(0, 0, y, x) = static_cast<float>((x + y) % 2);
  CHECK(bce_iou_weighted(Tensor4D(board.shape()), board) ==
        doctest::Approx(kLn2 + 28.0 / 43.0).epsilon(1e-9));
  CHECK(bce_iou_weighted(Tensor4D(board.shape()), board) ==
        doctest::Approx(1.344310).epsilon(1e-6));

  CHECK_THROWS_AS(bce_iou_weighted(board, Tensor4D(1, 1, 4, 5)), ShapeError);
  CHECK_THROWS_AS(bce_iou_weighted(board, board, 4), ConfigError);
}

TEST_CASE("bce_iou with a uniform target has unit weights") {
  // No boundary anywhere: the loss is plain mean BCE plus unweighted soft IoU.
  Sampler s(11);
  const Tensor4D z = random_tensor(s, {1, 1, 5, 6}, -2.0f, 2.0f);
  const Tensor4D y(z.shape(), 1.0f);
  double bce = 0, inter = 0, uni = 0;
  for (float zi : z.values()) {
    const double p = 1 / (1 + std::exp(-static_cast<double>(zi)));
    bce -= std::log(p);
    inter += p;
    uni += p + 1;
  }
  const double want = bce / 30 + 1 - (inter + 1) / (uni - inter + 1);
  CHECK(bce_iou_weighted(z, y) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("ce_dice") {
  Tensor4D labels(Shape{1, 1, 2, 2}, std::vector<float>{0, 1, 1, 0});
  Tensor4D perfect(1, 2, 2, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      perfect.at(0, static_cast<int>(labels.at(0, 0, y, x)), y, x) = 30.0f;
  CHECK(ce_dice_loss(perfect, labels) < 1e-4);

  // Uniform logits: CE = ln2, soft DICE per class = (2*1 + 1) / (2 + 2 + 1).
  CHECK(ce_dice_loss(Tensor4D(1, 2, 2, 2), labels) ==
        doctest::Approx(0.3 * kLn2 + 0.7 * (1 - 0.6)).epsilon(1e-9));

  Sampler s(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor4D z = random_tensor(s, {2, 3, 2, 2}, -4.0f, 4.0f);
    Tensor4D lab(2, 1, 2, 2);
    for (float &v : lab.values())
      v = static_cast<float>(s.integer(0, 2));
    // Class probabilities are stored as float32 before the DICE sums.
    CHECK(ce_dice_loss(z, lab) ==
          doctest::Approx(ce_dice_reference(z, lab)).epsilon(1e-6));
  }
  Tensor4D bad = labels;
  bad.at(0, 0, 0, 0) = 2.0f;
  CHECK_THROWS_AS(ce_dice_loss(perfect, bad), ConfigError);
}

TEST_CASE("additive deep supervision") {
  Sampler s(13);
  const PredictionMaps m = random_maps(s, 1);
  const Tensor4D target = random_mask(s, {2, 1, 16, 16});
  const auto base = bce_iou_base();
  const PredictionMaps r = resize_maps(m, 16, 16);

  LossWeights zero{0, 0, 0, 0, 0};
  CHECK(additive_loss(m, target, zero, base) == 0.0);
  CHECK(additive_loss(m, target, LossWeights{1, 0, 0, 0, 0}, base) ==
        base(r.p[0], target));

  const LossWeights w{0.5, 1.5, 2.0, 0.25, 3.0};
  Tensor4D all = add(add(add(r.p[0], r.p[1]), r.p[2]), r.p[3]);
  const double hand = 0.5 * base(r.p[0], target) + 1.5 * base(r.p[1], target) +
                      2.0 * base(r.p[2], target) + 0.25 * base(r.p[3], target) +
                      3.0 * base(all, target);
  CHECK(additive_loss(m, target, w, base) == doctest::Approx(hand).epsilon(1e-12));

  const LossWeights no_delta{1, 1, 1, 1, 0};
  double four = 0;
  for (const auto &p : r.p)
    four += base(p, target);
  CHECK(additive_loss(m, target, no_delta, base) ==
        doctest::Approx(four).epsilon(1e-12));
}

TEST_CASE("mutation over all subsets") {
  Sampler s(14);
  const Tensor4D target = random_mask(s, {2, 1, 16, 16});
  const auto base = bce_iou_base();

  // Only p1 non-zero: eight subsets contain it, seven do not.
  PredictionMaps m = random_maps(s, 1);
  for (int i = 1; i < 4; ++i)
    std::fill(m.p[i].values().begin(), m.p[i].values().end(), 0.0f);
  const PredictionMaps r = resize_maps(m, 16, 16);
  const double want =
      8 * base(r.p[0], target) + 7 * base(Tensor4D(target.shape()), target);
  CHECK(mutation_loss(m, target, base) == doctest::Approx(want).epsilon(1e-12));

  int calls = 0;
  const BaseLoss counting = [&](const Tensor4D &z, const Tensor4D &y) {
    ++calls;
    return base(z, y);
  };
  const PredictionMaps full = random_maps(s, 1);
  const double sum = mutation_loss(full, target, counting);
  CHECK(calls == 15);
  CHECK(sum == oracle::mutation_enumeration(full, target, base));
  CHECK(mutation_loss(full, target, base, SubsetReduction::Mean) ==
        doctest::Approx(sum / 15).epsilon(1e-12));
  CHECK(sum >= 0);
}

TEST_CASE("losses are invariant to batch order") {
  Sampler s(15);
  const PredictionMaps m = random_maps(s, 1);
  const Tensor4D target = random_mask(s, {2, 1, 16, 16});
  auto swap = [](const Tensor4D &t) {
    Tensor4D out(t.shape());
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < t.c(); ++c)
        std::copy(t.plane(b, c).begin(), t.plane(b, c).end(),
                  out.plane(1 - b, c).begin());
    return out;
  };
  PredictionMaps sw;
  for (int i = 0; i < 4; ++i)
    sw.p[i] = swap(m.p[i]);
  const auto base = bce_iou_base();
  CHECK(mutation_loss(sw, swap(target), base) ==
        doctest::Approx(mutation_loss(m, target, base)).epsilon(1e-12));
}

TEST_CASE("dice and iou") {
  const Tensor4D gt = mask_with(4, 4, {{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  const Tensor4D pred = mask_with(4, 4, {{0, 0}, {0, 1}, {2, 2}, {3, 3}});
  CHECK(dice_score(pred, gt) == doctest::Approx(50.0));
  CHECK(iou_score(pred, gt) == doctest::Approx(100.0 / 3.0));
  CHECK(dice_score(gt, gt) == 100.0);
  CHECK(dice_score(Tensor4D(gt.shape()), Tensor4D(gt.shape())) == 100.0);

  Sampler s(16);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor4D a = random_mask(s, {1, 1, 6, 6});
    const Tensor4D b = random_mask(s, {1, 1, 6, 6});
    const double d = dice_score(a, b) / 100, j = iou_score(a, b) / 100;
    CHECK(std::abs(d - 2 * j / (1 + j)) < 1e-9);
  }
}

TEST_CASE("hd95") {
  const Tensor4D a = mask_with(8, 8, {{1, 1}});
  const Tensor4D b = mask_with(8, 8, {{4, 5}});
  CHECK(*hd95(a, b) == doctest::Approx(5.0));
  CHECK(*hd95(a, a) == 0.0);
  CHECK_FALSE(hd95(a, Tensor4D(a.shape())).has_value());

  Tensor4D sq(1, 1, 9, 9), shifted(1, 1, 9, 9);
  for (int y = 2; y < 5; ++y)
    for (int x = 2; x < 5; ++x) {
      sq.at(0, 0, y, x) = 1.0f;
      shifted.at(0, 0, y + 2, x) = 1.0f;
    }
  CHECK(*hd95(sq, shifted) ==
        doctest::Approx(oracle::hd95_pairwise(sq, shifted)).epsilon(1e-9));
  CHECK(*hd95(sq, shifted, Hd95Mode::MaxDirected) >= 2.0);

  CHECK(percentile({4, 1, 3, 2}, 50) == doctest::Approx(2.5));
  CHECK(percentile({0, 10}, 95) == doctest::Approx(9.5));
}

TEST_CASE("loss property suite") {
  const SuiteResult r = verify_loss(VerifyOptions{});
  for (const auto &p : r.properties) {
    INFO(p.name << ": " << p.counterexample);
    CHECK(p.pass());
  }
}
