#include "emcad/decoder.hpp"

#include "emcad/errors.hpp"
#include "emcad/rng.hpp"

#include <cmath>

namespace emcad {

namespace {

constexpr float kInitRange = 0.05f;

std::vector<std::uint32_t> dims_of(const Shape &s) {
  return {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
          static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
}

// Walks every stored tensor of a decoder in canonical order. Works for both
// const and mutable decoders.
template <typename Dec, typename Fn> void walk(Dec &dec, Fn &&emit) {
  auto conv = [&](const std::string &path, auto &c) {
    emit(path + ".weight", TensorKind::Parameter, dims_of(c.weights.shape()),
         c.weights.values());
    if (c.bias)
      emit(path + ".bias", TensorKind::Parameter,
           std::vector<std::uint32_t>{static_cast<std::uint32_t>(c.bias->size())},
           std::span(*c.bias));
  };
  auto norm = [&](const std::string &path, auto &b) {
    const std::vector<std::uint32_t> d{static_cast<std::uint32_t>(b.gamma.size())};
    emit(path + ".gamma", TensorKind::Parameter, d, std::span(b.gamma));
    emit(path + ".beta", TensorKind::Parameter, d, std::span(b.beta));
    emit(path + ".running_mean", TensorKind::Buffer, d, std::span(b.running_mean));
    emit(path + ".running_var", TensorKind::Buffer, d, std::span(b.running_var));
  };
  for (auto &st : dec.stages()) {
    const std::string base = "stage" + std::to_string(st.level);
    if (st.eucb) {
      conv(base + ".eucb.dwc", st.eucb->dwc);
      norm(base + ".eucb.bn", st.eucb->bn);
      conv(base + ".eucb.proj", st.eucb->proj);
    }
    if (st.gate) {
      conv(base + ".gate.gc_g", st.gate->gc_g);
      norm(base + ".gate.bn_g", st.gate->bn_g);
      conv(base + ".gate.gc_x", st.gate->gc_x);
      norm(base + ".gate.bn_x", st.gate->bn_x);
      conv(base + ".gate.psi", st.gate->psi);
      norm(base + ".gate.bn_psi", st.gate->bn_psi);
    }
    if (st.mscam) {
      const std::string m = base + ".mscam";
      conv(m + ".cab.reduce", st.mscam->cab.reduce);
      conv(m + ".cab.expand", st.mscam->cab.expand);
      conv(m + ".sab.lkc", st.mscam->sab.lkc);
      conv(m + ".mscb.pwc1", st.mscam->mscb.pwc1);
      norm(m + ".mscb.bn1", st.mscam->mscb.bn1);
      auto &branches = st.mscam->mscb.dwcbs;
      for (std::size_t i = 0; i < branches.size(); ++i) {
        const std::string b = m + ".mscb.dwcb" + std::to_string(i);
        conv(b + ".conv", branches[i].conv);
        norm(b + ".bn", branches[i].bn);
      }
      conv(m + ".mscb.pwc2", st.mscam->mscb.pwc2);
      norm(m + ".mscb.bn2", st.mscam->mscb.bn2);
    }
    conv(base + ".head", st.head);
  }
}

template <typename T, typename Dec>
std::vector<TensorRef<T>> collect(Dec &dec) {
  std::vector<TensorRef<T>> out;
  walk(dec, [&](std::string name, TensorKind kind,
                std::vector<std::uint32_t> dims, auto values) {
    out.push_back({std::move(name), kind, std::move(dims),
                   std::span<T>(values.data(), values.size())});
  });
  return out;
}

void require_shape(const Tensor4D &t, const Shape &expect,
                   const std::string &what) {
  if (t.shape() != expect)
    throw ShapeError(what + ": expected " + to_string(expect) + ", got " +
                     to_string(t.shape()));
}

} // namespace

Decoder::Decoder(DecoderConfig cfg, std::vector<DecoderStage> stages)
    : cfg_(std::move(cfg)), stages_(std::move(stages)) {}

std::vector<TensorRef<const float>> tensor_refs(const Decoder &dec) {
  return collect<const float>(dec);
}

std::vector<TensorRef<float>> tensor_refs(Decoder &dec) {
  return collect<float>(dec);
}

Decoder build_decoder(const DecoderConfig &cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<DecoderStage> stages;
  for (int level = 4; level >= 1; --level) {
    DecoderStage st;
    st.level = level;
    st.channels = cfg.channels[level - 1];
    const int c = st.channels;
    if (cfg.cascaded && level < 4) {
      st.eucb = make_eucb(cfg.channels[level], c, cfg.upsample_mode);
      if (cfg.use_lgag)
        st.gate = cfg.gate == GateKind::Lgag
                      ? make_lgag(c, c, cfg.gate_intermediate(c),
                                  cfg.gate_groups(c))
                      : make_ag(c, c, cfg.gate_intermediate(c));
    }
    if (cfg.use_mscam)
      st.mscam = MSCAMParams{
          make_cab(c, cfg.cab_ratio), make_sab(cfg.sab_kernel),
          make_mscb(c, c, cfg.kernel_set, cfg.expansion_factor,
                    cfg.msdc_arrangement, cfg.shuffle_groups)};
    st.head = make_seg_head(c, cfg.num_classes);
    stages.push_back(std::move(st));
  }
  Decoder dec(cfg, std::move(stages));

  for (auto &ref : tensor_refs(dec)) {
    const bool is_conv = ref.name.ends_with(".weight") ||
                         ref.name.ends_with(".bias");
    if (!is_conv)
      continue; // batch norm stays at identity statistics
    const CounterRng rng(seed, CounterRng::hash(ref.name));
    for (std::size_t i = 0; i < ref.values.size(); ++i)
      ref.values[i] = rng.uniform(i, -kInitRange, kInitRange);
  }
  return dec;
}

std::array<Shape, 4> feature_shapes(const DecoderConfig &cfg, int batch,
                                    int input_h, int input_w) {
  if (input_h < 32 || input_w < 32 || input_h % 32 != 0 || input_w % 32 != 0)
    throw ConfigError("input size " + std::to_string(input_h) + "x" +
                      std::to_string(input_w) +
                      " must be positive multiples of 32");
  std::array<Shape, 4> out;
  for (int i = 0; i < 4; ++i) {
    const int scale = 4 << i;
    out[i] = Shape{batch, cfg.channels[i], input_h / scale, input_w / scale};
  }
  return out;
}

PyramidFeatures synth_features(const DecoderConfig &cfg, int input_h,
                               int input_w, std::uint64_t seed,
                               FeatureFill fill, int batch) {
  const auto shapes = feature_shapes(cfg, batch, input_h, input_w);
  PyramidFeatures f;
  for (int i = 0; i < 4; ++i) {
    Tensor4D t(shapes[i]);
    if (fill == FeatureFill::Uniform) {
      const CounterRng rng(seed, 0xFEA7u + i);
      auto v = t.values();
      for (std::size_t k = 0; k < v.size(); ++k)
        v[k] = rng.uniform(k, -1.0f, 1.0f);
    } else if (fill == FeatureFill::Ramp) {
      for (int b = 0; b < t.n(); ++b)
        for (int ch = 0; ch < t.c(); ++ch)
          for (int y = 0; y < t.h(); ++y)
            for (int x = 0; x < t.w(); ++x)
              t.at(b, ch, y, x) =
                  static_cast<float>((b + ch * 7 + y * 3 + x) % 16) / 8.0f -
                  1.0f;
    }
    f.x[i] = std::move(t);
  }
  return f;
}

PredictionMaps decoder_forward(const Decoder &dec, const PyramidFeatures &f) {
  const DecoderConfig &cfg = dec.config();
  const Tensor4D &deep = f.x[3];
  const int batch = deep.n();
  const int input_h = deep.h() * 32, input_w = deep.w() * 32;
  const auto shapes = feature_shapes(cfg, batch, input_h, input_w);
  for (int i = 0; i < 4; ++i)
    require_shape(f.x[i], shapes[i], "stage" + std::to_string(i + 1) +
                                         " encoder feature");

  PredictionMaps maps;
  Tensor4D prev; // refined feature of the previous (deeper) stage
  for (const DecoderStage &st : dec.stages()) {
    const Tensor4D &skip = f.x[st.level - 1];
    const std::string where = "stage" + std::to_string(st.level);
    Tensor4D fused;
    if (st.eucb) {
      Tensor4D up = eucb_forward(st.eucb.value(), prev);
      require_shape(up, skip.shape(), where + " upsampled path");
      // g = encoder skip feature, x = upsampled decoder feature.
      Tensor4D gated = st.gate ? (cfg.gate == GateKind::Lgag
                                      ? lgag_forward(*st.gate, skip, up)
                                      : ag_forward(*st.gate, skip, up))
                               : skip;
      fused = add(up, gated);
    } else {
      fused = skip;
    }
    Tensor4D refined =
        st.mscam ? mscam_forward(st.mscam->cab, st.mscam->sab,
                                 st.mscam->mscb, fused)
                 : std::move(fused);
    maps.p[4 - st.level] = seg_head_forward(st.head, refined);
    prev = std::move(refined);
  }
  return maps;
}

Tensor4D softmax_channels(const Tensor4D &logits) {
  Tensor4D out(logits.shape());
  const std::size_t plane = logits.shape().plane();
  for (int b = 0; b < logits.n(); ++b)
    for (std::size_t i = 0; i < plane; ++i) {
      float mx = logits.plane(b, 0)[i];
      for (int ch = 1; ch < logits.c(); ++ch)
        mx = std::max(mx, logits.plane(b, ch)[i]);
      double sum = 0.0;
      for (int ch = 0; ch < logits.c(); ++ch)
        sum += std::exp(static_cast<double>(logits.plane(b, ch)[i]) - mx);
      for (int ch = 0; ch < logits.c(); ++ch)
        out.plane(b, ch)[i] = static_cast<float>(
            std::exp(static_cast<double>(logits.plane(b, ch)[i]) - mx) / sum);
    }
  return out;
}

Tensor4D activate_logits(const Tensor4D &logits) {
  return logits.c() == 1 ? sigmoid(logits) : softmax_channels(logits);
}

Tensor4D aggregate_predictions(const PredictionMaps &maps, int target_h,
                               int target_w) {
  for (const auto &p : maps.p)
    if (p.h() > target_h || p.w() > target_w)
      throw ShapeError("aggregate: target smaller than map " +
                       to_string(p.shape()));
  Tensor4D sum = resize_bilinear(maps.p[0], target_h, target_w);
  for (int i = 1; i < 4; ++i)
    sum = add(sum, resize_bilinear(maps.p[i], target_h, target_w));
  return activate_logits(sum);
}

Tensor4D final_map(const PredictionMaps &maps) {
  const Tensor4D &p4 = maps.p[3];
  return activate_logits(resize_bilinear(p4, 4 * p4.h(), 4 * p4.w()));
}

} // namespace emcad
