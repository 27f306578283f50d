#pragma once

#include "emcad/kernels.hpp"

#include <vector>

namespace emcad {

/// Attention gate state. The large-kernel grouped gate uses 3x3 grouped
/// projections; the Attention U-Net baseline uses 1x1 ungrouped ones.
struct GateParams {
  ConvParams gc_g; // gating signal (skip feature) -> F_int
  ConvParams gc_x; // gated feature -> F_int
  NormParams bn_g;
  NormParams bn_x;
  ConvParams psi; // F_int -> 1, with bias
  NormParams bn_psi;

  [[nodiscard]] int intermediate() const noexcept { return gc_g.out_channels; }
  [[nodiscard]] int group_count() const noexcept { return gc_g.groups; }
  void validate() const;
};

using LGAGParams = GateParams;
using AGParams = GateParams;

// Zero-initialized gate state: kernel 3 with `groups` for LGAG, kernel 1
// ungrouped for AG.
GateParams make_lgag(int f_g, int f_l, int f_int, int groups);
GateParams make_ag(int f_g, int f_l, int f_int);

struct CABParams {
  ConvParams reduce; // C -> ceil(C/ratio), no bias
  ConvParams expand; // ceil(C/ratio) -> C, no bias
  int ratio = 16;

  [[nodiscard]] int channels() const noexcept { return reduce.in_channels; }
  void validate() const;
};
CABParams make_cab(int channels, int ratio = 16, bool with_bias = false);
int cab_reduced_channels(int channels, int ratio);

struct SABParams {
  ConvParams lkc; // 2 -> 1, k x k, with bias
  void validate() const;
};
SABParams make_sab(int kernel = 7);

enum class MsdcArrangement { Parallel, Sequential };

struct DepthwiseBranch {
  int kernel = 1;
  ConvParams conv;
  NormParams bn;
};

struct MSCBParams {
  ConvParams pwc1; // C -> C*e
  NormParams bn1;
  std::vector<DepthwiseBranch> dwcbs;
  ConvParams pwc2; // C*e -> C_out
  NormParams bn2;
  int expansion_factor = 2;
  int shuffle_groups = 1;
  MsdcArrangement arrangement = MsdcArrangement::Parallel;

  [[nodiscard]] int expanded() const noexcept { return pwc1.out_channels; }
  void validate() const;
};

// Default shuffle groups: |KS| when it divides the expanded width,
// otherwise gcd(expanded, |KS|).
int default_shuffle_groups(int expanded_channels, int kernel_count);

MSCBParams make_mscb(int in_channels, int out_channels,
                     const std::vector<int> &kernels, int expansion_factor,
                     MsdcArrangement arrangement, int shuffle_groups = 0);

struct EUCBParams {
  ConvParams dwc; // 3x3 depth-wise, C -> C
  NormParams bn;
  ConvParams proj; // 1x1, C -> C_next, with bias
  UpsampleMode upsample = UpsampleMode::Nearest;
  void validate() const;
};
EUCBParams make_eucb(int in_channels, int out_channels,
                     UpsampleMode mode = UpsampleMode::Nearest);

ConvParams make_seg_head(int channels, int num_classes);

// x * sigmoid(BN(psi(ReLU(BN(gc_g(g)) + BN(gc_x(x)))))), output shaped like x.
Tensor4D lgag_forward(const LGAGParams &p, const Tensor4D &g,
                      const Tensor4D &x);
Tensor4D ag_forward(const AGParams &p, const Tensor4D &g, const Tensor4D &x);
// Gate coefficient map (n, 1, h, w) alone.
Tensor4D gate_attention(const GateParams &p, const Tensor4D &g,
                        const Tensor4D &x);

Tensor4D cab_attention(const CABParams &p, const Tensor4D &x);
Tensor4D cab_forward(const CABParams &p, const Tensor4D &x);
Tensor4D sab_attention(const SABParams &p, const Tensor4D &x);
Tensor4D sab_forward(const SABParams &p, const Tensor4D &x);

Tensor4D dwcb_forward(const DepthwiseBranch &branch, const Tensor4D &x);
Tensor4D msdc_forward(const MSCBParams &p, const Tensor4D &x);
Tensor4D mscb_forward(const MSCBParams &p, const Tensor4D &x);
Tensor4D mscam_forward(const CABParams &cab, const SABParams &sab,
                       const MSCBParams &mscb, const Tensor4D &x);

Tensor4D eucb_forward(const EUCBParams &p, const Tensor4D &x);
Tensor4D seg_head_forward(const ConvParams &p, const Tensor4D &x);

} // namespace emcad
