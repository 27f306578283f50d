#include "emcad/cost.hpp"
#include "emcad/decoder.hpp"
#include "emcad/errors.hpp"
#include "emcad/verify.hpp"

#include <doctest.h>

#include <cmath>

using namespace emcad;

namespace {

DecoderConfig with_classes(DecoderConfig cfg, int k) {
  cfg.num_classes = k;
  return cfg;
}

} // namespace

TEST_CASE("config presets and validation") {
  const DecoderConfig std_cfg = DecoderConfig::standard();
  CHECK(std_cfg.channels == std::array<int, 4>{64, 128, 320, 512});
  CHECK(DecoderConfig::tiny().channels == std::array<int, 4>{32, 64, 160, 256});
  CHECK_NOTHROW(std_cfg.validate());

  DecoderConfig bad = std_cfg;
  bad.channels[1] = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = std_cfg;
  bad.cascaded = false; // a gate needs the upsampled partner
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = std_cfg;
  bad.kernel_set = {1, 4};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = std_cfg;
  bad.num_classes = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("parameter totals of the presets") {
  const auto standard =
      count_params(build_decoder(with_classes(DecoderConfig::standard(), 9), 1));
  CHECK(standard.body_params() == doctest::Approx(1.91e6).epsilon(0.02));
  const auto tiny =
      count_params(build_decoder(with_classes(DecoderConfig::tiny(), 9), 1));
  CHECK(tiny.body_params() == doctest::Approx(0.507e6).epsilon(0.02));

  DecoderConfig cascaded = with_classes(DecoderConfig::standard(), 9);
  cascaded.use_lgag = false;
  cascaded.use_mscam = false;
  CHECK(count_params(build_decoder(cascaded, 1)).body_params() ==
        doctest::Approx(0.224e6).epsilon(0.05));
}

TEST_CASE("build is deterministic in the seed") {
  const DecoderConfig cfg = DecoderConfig::tiny();
  const Decoder a = build_decoder(cfg, 42), b = build_decoder(cfg, 42),
                c = build_decoder(cfg, 43);
  const auto ra = tensor_refs(a), rb = tensor_refs(b), rc = tensor_refs(c);
  REQUIRE(ra.size() == rb.size());
  bool same = true, differs = false;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    same = same && ra[i].name == rb[i].name &&
           std::equal(ra[i].values.begin(), ra[i].values.end(),
                      rb[i].values.begin());
    differs = differs || !std::equal(ra[i].values.begin(), ra[i].values.end(),
                                     rc[i].values.begin());
  }
  CHECK(same);
  CHECK(differs);
  CHECK(ra.front().name == "stage4.mscam.cab.reduce.weight");
  CHECK(ra.back().name == "stage1.head.bias");
}

TEST_CASE("stage schedule at 224x224") {
  const DecoderConfig cfg = with_classes(DecoderConfig::tiny(), 3);
  const auto shapes = feature_shapes(cfg, 2, 224, 224);
  CHECK(shapes[0] == Shape{2, 32, 56, 56});
  CHECK(shapes[3] == Shape{2, 256, 7, 7});
  const auto maps = decoder_forward(
      build_decoder(cfg, 5),
      synth_features(cfg, 224, 224, 5, FeatureFill::Uniform, 2));
  const int sides[4] = {7, 14, 28, 56};
  for (int i = 0; i < 4; ++i)
    CHECK(maps.p[i].shape() == Shape{2, 3, sides[i], sides[i]});
  CHECK(final_map(maps).shape() == Shape{2, 3, 224, 224});
}

TEST_CASE("standard feature shapes") {
  const auto f = synth_features(DecoderConfig::standard(), 224, 224, 9,
                                FeatureFill::Zeros);
  CHECK(f.x[0].shape() == Shape{1, 64, 56, 56});
  CHECK(f.x[1].shape() == Shape{1, 128, 28, 28});
  CHECK(f.x[2].shape() == Shape{1, 320, 14, 14});
  CHECK(f.x[3].shape() == Shape{1, 512, 7, 7});
  for (const auto &t : f.x)
    CHECK(std::all_of(t.values().begin(), t.values().end(),
                      [](float v) { return v == 0.0f; }));
  const auto a = synth_features(DecoderConfig::standard(), 64, 64, 9,
                                FeatureFill::Uniform);
  const auto b = synth_features(DecoderConfig::standard(), 64, 64, 9,
                                FeatureFill::Uniform);
  for (int i = 0; i < 4; ++i)
    CHECK(a.x[i] == b.x[i]);
  CHECK_THROWS_AS(feature_shapes(DecoderConfig::standard(), 1, 100, 96),
                  ConfigError);
}

TEST_CASE("zero features with only head biases give constant maps") {
  const DecoderConfig cfg = with_classes(DecoderConfig::tiny(), 2);
  Decoder dec = build_decoder(cfg, 3);
  for (auto &ref : tensor_refs(dec))
    if (ref.name.ends_with(".bias") && !ref.name.ends_with("head.bias"))
      std::fill(ref.values.begin(), ref.values.end(), 0.0f);
  const auto maps = decoder_forward(
      dec, synth_features(cfg, 64, 64, 0, FeatureFill::Zeros));
  for (int i = 0; i < 4; ++i) {
    const auto &bias = *dec.stages()[static_cast<std::size_t>(i)].head.bias;
    for (int k = 0; k < 2; ++k)
      for (float v : maps.p[i].plane(0, k))
        CHECK(v == bias[static_cast<std::size_t>(k)]);
  }
}

TEST_CASE("all toggles off is four independent heads") {
  DecoderConfig off = with_classes(DecoderConfig::tiny(), 2);
  off.cascaded = false;
  off.use_lgag = false;
  off.use_mscam = false;
  const auto f = synth_features(off, 64, 64, 8, FeatureFill::Uniform);
  const Decoder dec = build_decoder(off, 8);
  const auto maps = decoder_forward(dec, f);
  for (const auto &st : dec.stages())
    CHECK(maps.p[4 - st.level] == seg_head_forward(st.head, f.x[st.level - 1]));

  DecoderConfig on = with_classes(DecoderConfig::tiny(), 2);
  const auto full = decoder_forward(build_decoder(on, 8), f);
  CHECK_FALSE(full.p[3] == maps.p[3]);
}

TEST_CASE("feature width mismatch names the stage") {
  const DecoderConfig cfg = DecoderConfig::tiny();
  auto f = synth_features(cfg, 64, 64, 1, FeatureFill::Zeros);
  f.x[2] = Tensor4D(1, 161, 4, 4);
  try {
    (void)decoder_forward(build_decoder(cfg, 1), f);
    FAIL("mismatch accepted");
  } catch (const ShapeError &e) {
    CHECK(std::string(e.what()).find("stage3") != std::string::npos);
  }
}

TEST_CASE("prediction aggregation") {
  PredictionMaps zeros;
  for (int i = 0; i < 4; ++i)
    zeros.p[i] = Tensor4D(1, 1, 2 << i, 2 << i);
  const Tensor4D half = aggregate_predictions(zeros, 16, 16);
  CHECK(half.shape() == Shape{1, 1, 16, 16});
  for (float v : half.values())
    CHECK(v == 0.5f);

  // Four maps of (0.5, 0) sum to logits (2, 0).
  PredictionMaps two;
  for (int i = 0; i < 4; ++i) {
    two.p[i] = Tensor4D(1, 2, 2 << i, 2 << i);
    std::fill(two.p[i].plane(0, 0).begin(), two.p[i].plane(0, 0).end(), 0.5f);
  }
  const Tensor4D prob = aggregate_predictions(two, 16, 16);
  CHECK(prob.at(0, 0, 5, 7) == doctest::Approx(0.880797).epsilon(1e-5));
  CHECK(prob.at(0, 1, 5, 7) == doctest::Approx(0.119203).epsilon(1e-5));

  Sampler s(4);
  const Tensor4D logits = random_tensor(s, {2, 5, 3, 3}, -6.0f, 6.0f);
  const Tensor4D sm = softmax_channels(logits);
  for (int b = 0; b < 2; ++b)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) {
        double sum = 0;
        for (int k = 0; k < 5; ++k)
          sum += sm.at(b, k, y, x);
        CHECK(std::abs(sum - 1.0) < 1e-6);
      }
}

TEST_CASE("graph property suite") {
  const SuiteResult r = verify_graph(VerifyOptions{});
  for (const auto &p : r.properties) {
    INFO(p.name << ": " << p.counterexample);
    CHECK(p.pass());
  }
}
