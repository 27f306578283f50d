#pragma once

// Deliberately naive reference implementations. They share no code paths with
// the optimized kernels and blocks; the verification suites and tests compare
// against them.

#include "emcad/blocks.hpp"
#include "emcad/decoder.hpp"
#include "emcad/losses.hpp"

#include <vector>

namespace emcad::oracle {

Tensor4D conv2d(const Tensor4D &in, const ConvParams &p);
Tensor4D batchnorm(const Tensor4D &in, const NormParams &p);
Tensor4D adaptive_pool(const Tensor4D &in, PoolMode mode);
Tensor4D channel_pool(const Tensor4D &in, PoolMode mode);
Tensor4D upsample_nearest2x(const Tensor4D &in);
Tensor4D resize_bilinear(const Tensor4D &in, int out_h, int out_w);
Tensor4D channel_shuffle(const Tensor4D &in, int groups);

// Elementwise helpers built on plain loops.
Tensor4D relu(const Tensor4D &in);
Tensor4D relu6(const Tensor4D &in);
Tensor4D sigmoid(const Tensor4D &in);
Tensor4D add(const Tensor4D &a, const Tensor4D &b);
Tensor4D scale_channels(const Tensor4D &x, const Tensor4D &per_channel);
Tensor4D scale_pixels(const Tensor4D &x, const Tensor4D &per_pixel);

// Block compositions written out step by step from the oracle primitives.
Tensor4D gate(const GateParams &p, const Tensor4D &g, const Tensor4D &x);
Tensor4D cab(const CABParams &p, const Tensor4D &x);
Tensor4D sab(const SABParams &p, const Tensor4D &x);
Tensor4D msdc(const MSCBParams &p, const Tensor4D &x);
Tensor4D mscb(const MSCBParams &p, const Tensor4D &x);
Tensor4D eucb(const EUCBParams &p, const Tensor4D &x);

// 15-term subset enumeration from an explicit subset table.
double mutation_enumeration(const PredictionMaps &maps, const Tensor4D &target,
                            const BaseLoss &base);

// All-pairs boundary distance HD95 over an explicit boundary scan.
double hd95_pairwise(const Tensor4D &a, const Tensor4D &b);

double max_abs_diff(const Tensor4D &a, const Tensor4D &b);

} // namespace emcad::oracle
