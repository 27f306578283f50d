#include "emcad/errors.hpp"
#include "emcad/kernels.hpp"
#include "emcad/oracle.hpp"
#include "emcad/verify.hpp"

#include <doctest.h>

#include <cmath>

using namespace emcad;

namespace {

Tensor4D iota(Shape s, float start = 0.0f, float step = 1.0f) {
  Tensor4D t(s);
  float v = start;
  for (float &x : t.values()) {
    x = v;
    v += step;
  }
  return t;
}

} // namespace

TEST_CASE("tensor construction validates extents") {
  CHECK_THROWS_AS(Tensor4D(0, 1, 1, 1), ShapeError);
  CHECK_THROWS_AS(Tensor4D(Shape{1, 1, 2, 2}, std::vector<float>(3)),
                  ShapeError);
  const Tensor4D t = iota({2, 3, 4, 5});
  CHECK(t.at(1, 2, 3, 4) == 119.0f);
  CHECK(t.plane(1, 0)[0] == 60.0f);
}

TEST_CASE("1x1 identity convolution returns its input") {
  ConvParams p = ConvParams::pointwise(1, 1, false);
  p.weights.values()[0] = 1.0f;
  Sampler s(1);
  const Tensor4D x = random_tensor(s, {2, 1, 5, 7});
  CHECK(conv2d(x, p) == x);
}

TEST_CASE("depth-wise conv keeps channels independent") {
  Sampler s(2);
  ConvParams p = ConvParams::depthwise(4, 3);
  randomize(p, s);
  Tensor4D x = random_tensor(s, {1, 4, 6, 6}, 0.5f, 1.0f);
  for (int j = 0; j < 4; ++j) {
    Tensor4D z = x;
    std::fill(z.plane(0, j).begin(), z.plane(0, j).end(), 0.0f);
    const Tensor4D y = conv2d(z, p);
    const Tensor4D ref = conv2d(x, p);
    for (int c = 0; c < 4; ++c) {
      const auto out = y.plane(0, c);
      if (c == j) {
        CHECK(std::all_of(out.begin(), out.end(),
                          [](float v) { return v == 0.0f; }));
      } else {
        CHECK(std::equal(out.begin(), out.end(), ref.plane(0, c).begin()));
      }
    }
  }
}

TEST_CASE("grouped 3x3 conv on 2x3x5x5 matches the direct oracle") {
  Sampler s(3);
  ConvParams p = ConvParams::make(3, 6, 3, 3, true);
  randomize(p, s, 1.0f);
  const Tensor4D x = random_tensor(s, {2, 3, 5, 5});
  const Tensor4D y = conv2d(x, p);
  CHECK(y.shape() == Shape{2, 6, 5, 5});
  CHECK(oracle::max_abs_diff(y, oracle::conv2d(x, p)) < kOracleTolerance);
}

TEST_CASE("conv output extents follow the closed form") {
  ConvParams p = ConvParams::make(2, 2, 5, 1, false);
  p.stride = 2;
  p.padding = 1;
  const Tensor4D y = conv2d(Tensor4D(1, 2, 9, 8), p);
  CHECK(y.h() == (9 + 2 - 5) / 2 + 1);
  CHECK(y.w() == (8 + 2 - 5) / 2 + 1);
  CHECK_THROWS_AS(conv2d(Tensor4D(1, 3, 9, 8), p), ShapeError);
}

TEST_CASE("conv2d is pure") {
  Sampler s(4);
  ConvParams p = ConvParams::make(4, 8, 3, 2, true);
  randomize(p, s);
  const Tensor4D x = random_tensor(s, {1, 4, 33, 29});
  CHECK(conv2d(x, p) == conv2d(x, p));
}

TEST_CASE("batch norm inference") {
  const Tensor4D x = iota({1, 2, 3, 3}, -4.0f, 0.5f);
  SUBCASE("identity statistics leave the input nearly unchanged") {
    const Tensor4D y = batchnorm_infer(x, NormParams::identity(2));
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(y.values()[i] ==
            doctest::Approx(x.values()[i]).epsilon(1e-5));
  }
  SUBCASE("gamma zero gives beta") {
    NormParams bn = NormParams::identity(2);
    bn.gamma = {0.0f, 0.0f};
    bn.beta = {1.5f, -2.0f};
    const Tensor4D y = batchnorm_infer(x, bn);
    for (float v : y.plane(0, 0))
      CHECK(v == 1.5f);
    for (float v : y.plane(0, 1))
      CHECK(v == -2.0f);
  }
  SUBCASE("hand-evaluated affine") {
    NormParams bn = NormParams::identity(1, 0.0f);
    bn.gamma = {2.0f};
    bn.beta = {1.0f};
    bn.running_mean = {3.0f};
    bn.running_var = {4.0f};
    // 2 * (5 - 3) / sqrt(4) + 1
    CHECK(batchnorm_infer(Tensor4D(1, 1, 1, 1, 5.0f), bn).at(0, 0, 0, 0) ==
          doctest::Approx(3.0));
  }
}

TEST_CASE("activations") {
  const Tensor4D x(Shape{1, 1, 1, 3}, std::vector<float>{7.5f, 0.0f, -2.0f});
  CHECK(relu6(x).values()[0] == 6.0f);
  CHECK(sigmoid(x).values()[1] == 0.5f);
  CHECK(relu(x).values()[2] == 0.0f);
  CHECK(sigmoid(0.0f) == 0.5f);
}

TEST_CASE("adaptive pooling") {
  const Tensor4D c(1, 3, 4, 5, 2.25f);
  for (PoolMode m : {PoolMode::Max, PoolMode::Avg})
    for (const Tensor4D out = adaptive_pool_1x1(c, m); float v : out.values())
      CHECK(v == 2.25f);
  const Tensor4D q(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  CHECK(adaptive_pool_1x1(q, PoolMode::Max).values()[0] == 4.0f);
  CHECK(adaptive_pool_1x1(q, PoolMode::Avg).values()[0] == 2.5f);
  Sampler s(5);
  const Tensor4D r = random_tensor(s, {1, 4, 7, 7});
  for (PoolMode m : {PoolMode::Max, PoolMode::Avg})
    CHECK(oracle::max_abs_diff(adaptive_pool_1x1(r, m),
                               oracle::adaptive_pool(r, m)) < 1e-6);
}

TEST_CASE("channel pooling") {
  const Tensor4D c(1, 3, 4, 5, -1.5f);
  for (PoolMode m : {PoolMode::Max, PoolMode::Avg})
    for (const Tensor4D out = channel_pool(c, m); float v : out.values())
      CHECK(v == -1.5f);
  const Tensor4D q(Shape{1, 4, 1, 1}, std::vector<float>{1, 2, 3, 4});
  CHECK(channel_pool(q, PoolMode::Max).values()[0] == 4.0f);
  CHECK(channel_pool(q, PoolMode::Avg).values()[0] == 2.5f);
  Sampler s(6);
  const Tensor4D r = random_tensor(s, {2, 5, 6, 3});
  for (PoolMode m : {PoolMode::Max, PoolMode::Avg})
    CHECK(oracle::max_abs_diff(channel_pool(r, m),
                               oracle::channel_pool(r, m)) < 1e-6);
}

TEST_CASE("upsampling") {
  const Tensor4D one(1, 1, 1, 1, 3.0f);
  const Tensor4D up = upsample2x(one, UpsampleMode::Nearest);
  CHECK(up.shape() == Shape{1, 1, 2, 2});
  for (float v : up.values())
    CHECK(v == 3.0f);

  const Tensor4D q(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  const Tensor4D n = upsample2x(q, UpsampleMode::Nearest);
  const std::vector<float> want{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  CHECK(n.vector() == want);

  // Half-pixel sampling: output column o reads source (o + 0.5) / 2 - 0.5,
  // clamped to [0, 1]: columns 0, 0.25, 0.75, 1 -> 0, 0.5, 1.5, 2.
  const Tensor4D b(Shape{1, 1, 2, 2}, std::vector<float>{0, 2, 0, 2});
  const Tensor4D bl = upsample2x(b, UpsampleMode::Bilinear);
  for (int y = 0; y < 4; ++y) {
    CHECK(bl.at(0, 0, y, 0) == 0.0f);
    CHECK(bl.at(0, 0, y, 1) == doctest::Approx(0.5));
    CHECK(bl.at(0, 0, y, 2) == doctest::Approx(1.5));
    CHECK(bl.at(0, 0, y, 3) == 2.0f);
  }
  CHECK(oracle::max_abs_diff(bl, oracle::resize_bilinear(b, 4, 4)) < 1e-7);
}

TEST_CASE("channel shuffle") {
  const Tensor4D x = iota({1, 6, 1, 1});
  CHECK(channel_shuffle(x, 1) == x);
  CHECK(channel_shuffle(x, 6) == x);
  const std::vector<float> want{0, 3, 1, 4, 2, 5};
  CHECK(channel_shuffle(x, 2).vector() == want);
  CHECK(channel_shuffle(channel_shuffle(x, 2), 3) == x);
  CHECK_THROWS_AS(channel_shuffle(x, 4), ConfigError);
}

TEST_CASE("elementwise helpers") {
  Sampler s(7);
  const Tensor4D a = random_tensor(s, {2, 3, 4, 4});
  CHECK(hadamard(a, Tensor4D(a.shape(), 1.0f)) == a);
  CHECK(add(a, Tensor4D(a.shape())) == a);
  Tensor4D scale(2, 3, 1, 1, 1.0f);
  scale.at(1, 2, 0, 0) = 2.0f;
  const Tensor4D y = hadamard(a, scale);
  for (int yy = 0; yy < 4; ++yy)
    for (int xx = 0; xx < 4; ++xx) {
      CHECK(y.at(1, 2, yy, xx) == 2.0f * a.at(1, 2, yy, xx));
      CHECK(y.at(0, 2, yy, xx) == a.at(0, 2, yy, xx));
    }
  CHECK_THROWS_AS(add(a, Tensor4D(2, 3, 4, 5)), ShapeError);
}

TEST_CASE("kernel suite passes and catches a planted padding bug") {
  VerifyOptions opts;
  const SuiteResult good = verify_kernels(opts);
  CHECK(good.pass());
  CHECK(good.properties.front().instances >= 200);

  opts.conv = wrong_padding_conv();
  const SuiteResult bad = verify_kernels(opts);
  REQUIRE_FALSE(bad.pass());
  CHECK(bad.first_failure()->name == "conv2d matches direct oracle");
  CHECK(bad.first_failure()->counterexample.find("p=") != std::string::npos);
}
