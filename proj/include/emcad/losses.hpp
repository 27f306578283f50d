#pragma once

#include "emcad/decoder.hpp"

#include <functional>

namespace emcad {

struct LossWeights {
  // Deep-supervision weights for p1..p4 and the p1+p2+p3+p4 term.
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double zeta = 1.0;
  double delta = 1.0;
  // Multi-class base loss mix.
  double ce_weight = 0.3;
  double dice_weight = 0.7;

  void validate() const;
};

using BaseLoss =
    std::function<double(const Tensor4D &logits, const Tensor4D &target)>;

/// Boundary-weighted BCE + weighted soft IoU on single-channel logits.
/// Pixel weight is 1 + boost * |mean_k(target) - target| where mean_k is the
/// k x k window mean over in-bounds pixels. Each term is normalized per
/// (batch, channel) slice and the result is averaged over slices.
double bce_iou_weighted(const Tensor4D &logits, const Tensor4D &target,
                        int pooling_window = 31, double boost = 5.0);

/// ce_weight * mean softmax cross-entropy + dice_weight * (1 - mean over
/// classes of soft DICE). Labels are class indices stored as floats in an
/// (n, 1, h, w) tensor. Soft DICE uses smoothing 1 in numerator and
/// denominator.
double ce_dice_loss(const Tensor4D &logits, const Tensor4D &labels,
                    const LossWeights &w = {});

/// Weighted sum of base(p_i) for the four maps plus base(p1+p2+p3+p4), with
/// maps bilinearly resized to the target resolution first.
double additive_loss(const PredictionMaps &maps, const Tensor4D &target,
                     const LossWeights &w, const BaseLoss &base);

enum class SubsetReduction { Sum, Mean };

/// Sum (or mean) of base(sum of p_i over S) over all 15 non-empty subsets S
/// of the four resized maps. Subsets are visited in bitmask order 1..15 with
/// bit i selecting p_{i+1}; members are summed in ascending index order.
double mutation_loss(const PredictionMaps &maps, const Tensor4D &target,
                     const BaseLoss &base,
                     SubsetReduction reduction = SubsetReduction::Sum);

// Resize all four maps to (h, w) with bilinear interpolation.
PredictionMaps resize_maps(const PredictionMaps &maps, int h, int w);

} // namespace emcad
