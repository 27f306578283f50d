#pragma once

#include "emcad/blocks.hpp"
#include "emcad/config.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace emcad {

struct MSCAMParams {
  CABParams cab;
  SABParams sab;
  MSCBParams mscb;
};

/// One decoder stage. `level` is the encoder stage it refines (4 = deepest,
/// 1/32 scale; 1 = shallowest, 1/4 scale).
struct DecoderStage {
  int level = 4;
  int channels = 0;
  std::optional<EUCBParams> eucb; // upsamples stage level+1 into this one
  std::optional<GateParams> gate;
  std::optional<MSCAMParams> mscam;
  ConvParams head;
};

/// Encoder pyramid: x[0] is X1 (1/4 scale, c1 channels) ... x[3] is X4
/// (1/32 scale, c4 channels).
struct PyramidFeatures {
  std::array<Tensor4D, 4> x;
};

/// Per-stage logits, deepest first: p[0] = p1 (1/32 scale) ... p[3] = p4
/// (1/4 scale).
struct PredictionMaps {
  std::array<Tensor4D, 4> p;
};

class Decoder {
public:
  Decoder(DecoderConfig cfg, std::vector<DecoderStage> stages);

  [[nodiscard]] const DecoderConfig &config() const noexcept { return cfg_; }
  // Deepest stage first (canonical build order).
  [[nodiscard]] const std::vector<DecoderStage> &stages() const noexcept {
    return stages_;
  }
  std::vector<DecoderStage> &stages() noexcept { return stages_; }

private:
  DecoderConfig cfg_;
  std::vector<DecoderStage> stages_;
};

enum class TensorKind { Parameter, Buffer };

/// Named view of one stored tensor, in canonical build order. Parameters are
/// learnable (conv weights/biases, BN gamma/beta); buffers are BN running
/// statistics.
template <typename T> struct TensorRef {
  std::string name;
  TensorKind kind;
  std::vector<std::uint32_t> dims;
  std::span<T> values;
};

std::vector<TensorRef<const float>> tensor_refs(const Decoder &dec);
std::vector<TensorRef<float>> tensor_refs(Decoder &dec);

// Conv weights and biases uniform in [-0.05, 0.05] from a counter-based
// stream keyed by (seed, tensor name); BN at identity statistics.
Decoder build_decoder(const DecoderConfig &cfg, std::uint64_t seed);

PredictionMaps decoder_forward(const Decoder &dec, const PyramidFeatures &f);

// Shapes each pyramid level must have for an input of h x w.
std::array<Shape, 4> feature_shapes(const DecoderConfig &cfg, int batch,
                                    int input_h, int input_w);

enum class FeatureFill { Uniform, Zeros, Ramp };

PyramidFeatures synth_features(const DecoderConfig &cfg, int input_h,
                               int input_w, std::uint64_t seed,
                               FeatureFill fill, int batch = 1);

// Per-pixel softmax across channels.
Tensor4D softmax_channels(const Tensor4D &logits);
// Sigmoid for a single channel, softmax otherwise.
Tensor4D activate_logits(const Tensor4D &logits);

// Every map bilinearly resized to target, summed, then activated.
Tensor4D aggregate_predictions(const PredictionMaps &maps, int target_h,
                               int target_w);
// p4 upsampled 4x and activated.
Tensor4D final_map(const PredictionMaps &maps);

} // namespace emcad
