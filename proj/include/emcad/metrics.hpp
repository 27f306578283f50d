#pragma once

#include "emcad/tensor.hpp"

#include <optional>
#include <vector>

namespace emcad {

// Masks are tensors where values > 0.5 are foreground. DICE and IoU count
// over every element; both-empty masks score 100.
double dice_score(const Tensor4D &pred, const Tensor4D &gt);
double iou_score(const Tensor4D &pred, const Tensor4D &gt);

enum class Hd95Mode {
  Pooled,      // 95th percentile of both directed distance sets combined
  MaxDirected, // max of the two per-direction 95th percentiles
};

/// 95th-percentile Hausdorff distance in pixels between the 8-connectivity
/// boundaries of two single-slice (n = c = 1) masks. Percentiles use linear
/// interpolation between order statistics. Empty masks yield nullopt.
std::optional<double> hd95(const Tensor4D &pred, const Tensor4D &gt,
                           Hd95Mode mode = Hd95Mode::Pooled);

// Linear-interpolation percentile, q in [0, 100]. `values` is reordered.
double percentile(std::vector<double> values, double q);

// Threshold logits (sigmoid > 0.5) of a single-channel map into a 0/1 mask.
Tensor4D binarize_logits(const Tensor4D &logits);

} // namespace emcad
