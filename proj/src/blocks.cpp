#include "emcad/blocks.hpp"

#include "emcad/errors.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace emcad {

namespace {

void require_channels(const Tensor4D &t, int expected, const char *block) {
  if (t.c() != expected)
    throw ShapeError(std::string(block) + ": expected " +
                     std::to_string(expected) + " channels, got " +
                     to_string(t.shape()));
}

Tensor4D gate_forward(const GateParams &p, const Tensor4D &g,
                      const Tensor4D &x) {
  return hadamard(x, gate_attention(p, g, x));
}

} // namespace

// ---- attention gates ------------------------------------------------------

void GateParams::validate() const {
  gc_g.validate();
  gc_x.validate();
  psi.validate();
  bn_g.validate();
  bn_x.validate();
  bn_psi.validate();
  if (gc_g.out_channels != gc_x.out_channels)
    throw ConfigError("gate: gc_g and gc_x must share the intermediate width");
  if (psi.in_channels != gc_g.out_channels || psi.out_channels != 1 ||
      !psi.is_pointwise())
    throw ConfigError("gate: psi must be a 1x1 F_int -> 1 convolution");
  if (bn_g.channels() != gc_g.out_channels ||
      bn_x.channels() != gc_x.out_channels || bn_psi.channels() != 1)
    throw ConfigError("gate: batch norm widths do not match projections");
}

GateParams make_lgag(int f_g, int f_l, int f_int, int groups) {
  GateParams p{ConvParams::make(f_g, f_int, 3, groups, true),
               ConvParams::make(f_l, f_int, 3, groups, true),
               NormParams::identity(f_int),
               NormParams::identity(f_int),
               ConvParams::pointwise(f_int, 1, true),
               NormParams::identity(1)};
  return p;
}

GateParams make_ag(int f_g, int f_l, int f_int) {
  GateParams p{ConvParams::pointwise(f_g, f_int, true),
               ConvParams::pointwise(f_l, f_int, true),
               NormParams::identity(f_int),
               NormParams::identity(f_int),
               ConvParams::pointwise(f_int, 1, true),
               NormParams::identity(1)};
  return p;
}

Tensor4D gate_attention(const GateParams &p, const Tensor4D &g,
                        const Tensor4D &x) {
  p.validate();
  if (g.n() != x.n() || g.h() != x.h() || g.w() != x.w())
    throw ShapeError("gate: g " + to_string(g.shape()) + " and x " +
                     to_string(x.shape()) + " differ spatially");
  require_channels(g, p.gc_g.in_channels, "gate(g)");
  require_channels(x, p.gc_x.in_channels, "gate(x)");
  const Tensor4D g1 = batchnorm_infer(conv2d(g, p.gc_g), p.bn_g);
  const Tensor4D x1 = batchnorm_infer(conv2d(x, p.gc_x), p.bn_x);
  const Tensor4D q = relu(add(g1, x1));
  return sigmoid(batchnorm_infer(conv2d(q, p.psi), p.bn_psi));
}

Tensor4D lgag_forward(const LGAGParams &p, const Tensor4D &g,
                      const Tensor4D &x) {
  return gate_forward(p, g, x);
}

Tensor4D ag_forward(const AGParams &p, const Tensor4D &g, const Tensor4D &x) {
  if (!p.gc_g.is_pointwise() || !p.gc_x.is_pointwise() || p.gc_g.groups != 1 ||
      p.gc_x.groups != 1)
    throw ConfigError("attention gate baseline expects 1x1 ungrouped "
                      "projections");
  return gate_forward(p, g, x);
}

// ---- channel / spatial attention ------------------------------------------

int cab_reduced_channels(int channels, int ratio) {
  if (channels < 1 || ratio < 1)
    throw ConfigError("channel attention needs positive width and ratio");
  return std::max(1, (channels + ratio - 1) / ratio);
}

void CABParams::validate() const {
  reduce.validate();
  expand.validate();
  if (!reduce.is_pointwise() || !expand.is_pointwise() ||
      reduce.out_channels != expand.in_channels ||
      expand.out_channels != reduce.in_channels)
    throw ConfigError("channel attention: reduce/expand widths inconsistent");
}

CABParams make_cab(int channels, int ratio, bool with_bias) {
  const int reduced = cab_reduced_channels(channels, ratio);
  return CABParams{ConvParams::pointwise(channels, reduced, with_bias),
                   ConvParams::pointwise(reduced, channels, with_bias), ratio};
}

Tensor4D cab_attention(const CABParams &p, const Tensor4D &x) {
  p.validate();
  require_channels(x, p.channels(), "channel attention");
  // One C1/C2 pair shared by both pooled descriptors.
  auto branch = [&](PoolMode mode) {
    return conv2d(relu(conv2d(adaptive_pool_1x1(x, mode), p.reduce)),
                  p.expand);
  };
  return sigmoid(add(branch(PoolMode::Max), branch(PoolMode::Avg)));
}

Tensor4D cab_forward(const CABParams &p, const Tensor4D &x) {
  return hadamard(x, cab_attention(p, x));
}

void SABParams::validate() const {
  lkc.validate();
  if (lkc.in_channels != 2 || lkc.out_channels != 1)
    throw ConfigError("spatial attention conv must map 2 -> 1 channels");
}

SABParams make_sab(int kernel) {
  if (kernel < 1 || kernel % 2 == 0)
    throw ConfigError("spatial attention kernel must be odd and positive");
  return SABParams{ConvParams::make(2, 1, kernel, 1, true)};
}

Tensor4D sab_attention(const SABParams &p, const Tensor4D &x) {
  p.validate();
  const Tensor4D pooled = concat_channels(channel_pool(x, PoolMode::Max),
                                          channel_pool(x, PoolMode::Avg));
  return sigmoid(conv2d(pooled, p.lkc));
}

Tensor4D sab_forward(const SABParams &p, const Tensor4D &x) {
  return hadamard(x, sab_attention(p, x));
}

// ---- multi-scale convolution block ----------------------------------------

int default_shuffle_groups(int expanded_channels, int kernel_count) {
  if (expanded_channels < 1 || kernel_count < 1)
    throw ConfigError("shuffle groups need positive widths");
  if (expanded_channels % kernel_count == 0)
    return kernel_count;
  return std::gcd(expanded_channels, kernel_count);
}

void MSCBParams::validate() const {
  pwc1.validate();
  pwc2.validate();
  bn1.validate();
  bn2.validate();
  if (!pwc1.is_pointwise() || !pwc2.is_pointwise())
    throw ConfigError("MSCB: expansion and projection must be 1x1");
  const int ex = pwc1.out_channels;
  if (bn1.channels() != ex || pwc2.in_channels != ex ||
      bn2.channels() != pwc2.out_channels)
    throw ConfigError("MSCB: expanded width inconsistent across layers");
  if (dwcbs.empty())
    throw ConfigError("MSCB: kernel set must not be empty");
  for (const auto &b : dwcbs) {
    b.conv.validate();
    b.bn.validate();
    if (b.kernel < 1 || b.kernel % 2 == 0)
      throw ConfigError("MSCB: depth-wise kernels must be odd");
    if (!b.conv.is_depthwise() || b.conv.in_channels != ex ||
        b.conv.kernel_h != b.kernel || b.conv.kernel_w != b.kernel ||
        b.bn.channels() != ex)
      throw ConfigError("MSCB: depth-wise branch k=" +
                        std::to_string(b.kernel) + " is not " +
                        std::to_string(ex) + "-channel depth-wise");
  }
  if (shuffle_groups < 1 || ex % shuffle_groups != 0)
    throw ConfigError("MSCB: shuffle groups must divide expanded width");
}

MSCBParams make_mscb(int in_channels, int out_channels,
                     const std::vector<int> &kernels, int expansion_factor,
                     MsdcArrangement arrangement, int shuffle_groups) {
  if (expansion_factor < 1)
    throw ConfigError("MSCB: expansion factor must be >= 1");
  if (kernels.empty())
    throw ConfigError("MSCB: kernel set must not be empty");
  const int ex = in_channels * expansion_factor;
  MSCBParams p;
  p.pwc1 = ConvParams::pointwise(in_channels, ex, false);
  p.bn1 = NormParams::identity(ex);
  for (int k : kernels) {
    if (k < 1 || k % 2 == 0)
      throw ConfigError("MSCB: depth-wise kernels must be odd, got " +
                        std::to_string(k));
    p.dwcbs.push_back({k, ConvParams::depthwise(ex, k), NormParams::identity(ex)});
  }
  p.pwc2 = ConvParams::pointwise(ex, out_channels, false);
  p.bn2 = NormParams::identity(out_channels);
  p.expansion_factor = expansion_factor;
  p.shuffle_groups =
      shuffle_groups > 0
          ? shuffle_groups
          : default_shuffle_groups(ex, static_cast<int>(kernels.size()));
  p.arrangement = arrangement;
  p.validate();
  return p;
}

Tensor4D dwcb_forward(const DepthwiseBranch &branch, const Tensor4D &x) {
  return relu6(batchnorm_infer(conv2d(x, branch.conv), branch.bn));
}

Tensor4D msdc_forward(const MSCBParams &p, const Tensor4D &x) {
  p.validate();
  require_channels(x, p.expanded(), "MSDC");
  if (p.arrangement == MsdcArrangement::Sequential) {
    Tensor4D cur = x;
    for (const auto &branch : p.dwcbs)
      cur = add(cur, dwcb_forward(branch, cur));
    return cur;
  }
  Tensor4D sum = dwcb_forward(p.dwcbs.front(), x);
  for (std::size_t i = 1; i < p.dwcbs.size(); ++i)
    sum = add(sum, dwcb_forward(p.dwcbs[i], x));
  return sum;
}

Tensor4D mscb_forward(const MSCBParams &p, const Tensor4D &x) {
  p.validate();
  require_channels(x, p.pwc1.in_channels, "MSCB");
  const Tensor4D expanded = relu6(batchnorm_infer(conv2d(x, p.pwc1), p.bn1));
  const Tensor4D mixed =
      channel_shuffle(msdc_forward(p, expanded), p.shuffle_groups);
  return batchnorm_infer(conv2d(mixed, p.pwc2), p.bn2);
}

Tensor4D mscam_forward(const CABParams &cab, const SABParams &sab,
                       const MSCBParams &mscb, const Tensor4D &x) {
  return mscb_forward(mscb, sab_forward(sab, cab_forward(cab, x)));
}

// ---- up-convolution and heads ---------------------------------------------

void EUCBParams::validate() const {
  dwc.validate();
  bn.validate();
  proj.validate();
  if (!dwc.is_depthwise() || bn.channels() != dwc.out_channels ||
      proj.in_channels != dwc.out_channels || !proj.is_pointwise())
    throw ConfigError("EUCB: expects depth-wise conv then 1x1 projection");
}

EUCBParams make_eucb(int in_channels, int out_channels, UpsampleMode mode) {
  return EUCBParams{ConvParams::depthwise(in_channels, 3),
                    NormParams::identity(in_channels),
                    ConvParams::pointwise(in_channels, out_channels, true),
                    mode};
}

Tensor4D eucb_forward(const EUCBParams &p, const Tensor4D &x) {
  p.validate();
  require_channels(x, p.dwc.in_channels, "EUCB");
  const Tensor4D up = upsample2x(x, p.upsample);
  return conv2d(relu(batchnorm_infer(conv2d(up, p.dwc), p.bn)), p.proj);
}

ConvParams make_seg_head(int channels, int num_classes) {
  return ConvParams::pointwise(channels, num_classes, true);
}

Tensor4D seg_head_forward(const ConvParams &p, const Tensor4D &x) {
  if (!p.is_pointwise())
    throw ConfigError("segmentation head must be a 1x1 convolution");
  require_channels(x, p.in_channels, "segmentation head");
  return conv2d(x, p);
}

} // namespace emcad
