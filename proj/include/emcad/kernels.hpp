#pragma once

#include "emcad/tensor.hpp"

#include <optional>
#include <vector>

namespace emcad {

/// Learnable state of one 2-D convolution. Weights are laid out as
/// (out_channels, in_channels / groups, kernel_h, kernel_w).
struct ConvParams {
  int in_channels = 1;
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;
  int groups = 1;
  Tensor4D weights;
  std::optional<std::vector<float>> bias;

  // Zero-initialized, stride 1, "same" padding floor(k/2).
  static ConvParams make(int in_channels, int out_channels, int kernel,
                         int groups, bool with_bias);
  static ConvParams depthwise(int channels, int kernel, bool with_bias = false) {
    return make(channels, channels, kernel, channels, with_bias);
  }
  static ConvParams pointwise(int in_channels, int out_channels,
                              bool with_bias) {
    return make(in_channels, out_channels, 1, 1, with_bias);
  }

  [[nodiscard]] bool is_depthwise() const noexcept {
    return groups == in_channels && groups == out_channels;
  }
  [[nodiscard]] bool is_pointwise() const noexcept {
    return kernel_h == 1 && kernel_w == 1;
  }
  [[nodiscard]] std::size_t param_count() const noexcept {
    return weights.size() + (bias ? bias->size() : 0);
  }
  [[nodiscard]] int out_extent(int in_extent, int kernel) const noexcept {
    return (in_extent + 2 * padding - kernel) / stride + 1;
  }

  // Throws ConfigError on inconsistent layout.
  void validate() const;
};

/// Inference-mode batch normalization state.
struct NormParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float eps = 1e-5f;

  // gamma=1, beta=0, mean=0, var=1.
  static NormParams identity(int channels, float eps = 1e-5f);

  [[nodiscard]] int channels() const noexcept {
    return static_cast<int>(gamma.size());
  }
  // Learnable scalars only (gamma, beta).
  [[nodiscard]] std::size_t param_count() const noexcept {
    return gamma.size() + beta.size();
  }
  void validate() const;
};

enum class PoolMode { Max, Avg };
enum class UpsampleMode { Nearest, Bilinear };

Tensor4D conv2d(const Tensor4D &input, const ConvParams &p);
Tensor4D batchnorm_infer(const Tensor4D &input, const NormParams &p);

Tensor4D relu(const Tensor4D &input);
Tensor4D relu6(const Tensor4D &input);
Tensor4D sigmoid(const Tensor4D &input);
float sigmoid(float x) noexcept;

// (n, c, h, w) -> (n, c, 1, 1)
Tensor4D adaptive_pool_1x1(const Tensor4D &input, PoolMode mode);
// (n, c, h, w) -> (n, 1, h, w)
Tensor4D channel_pool(const Tensor4D &input, PoolMode mode);

// (n, c, h, w) -> (n, c, 2h, 2w). Bilinear uses the half-pixel
// (align_corners = false) convention.
Tensor4D upsample2x(const Tensor4D &input, UpsampleMode mode);
Tensor4D resize_bilinear(const Tensor4D &input, int out_h, int out_w);

Tensor4D channel_shuffle(const Tensor4D &input, int groups);

Tensor4D add(const Tensor4D &a, const Tensor4D &b);
// b may match a, or be (n,c,1,1) / (n,1,h,w) and broadcast over the rest.
Tensor4D hadamard(const Tensor4D &a, const Tensor4D &b);
Tensor4D concat_channels(const Tensor4D &a, const Tensor4D &b);

} // namespace emcad
