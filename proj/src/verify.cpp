#include "emcad/verify.hpp"

#include "emcad/blocks.hpp"
#include "emcad/cost.hpp"
#include "emcad/decoder.hpp"
#include "emcad/errors.hpp"
#include "emcad/losses.hpp"
#include "emcad/metrics.hpp"
#include "emcad/oracle.hpp"
#include "emcad/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace emcad {

namespace {

// Collects outcomes of one property and remembers the first counterexample.
class Property {
public:
  explicit Property(std::string name) { r_.name = std::move(name); }

  void check(bool ok, const std::string &detail) {
    ++r_.instances;
    if (ok)
      return;
    if (r_.failures++ == 0)
      r_.counterexample = detail;
  }
  // Oracle comparison within kOracleTolerance.
  void near(const Tensor4D &got, const Tensor4D &want,
            const std::string &detail, double tol = kOracleTolerance) {
    const double d = oracle::max_abs_diff(got, want);
    if (d < tol) {
      check(true, {});
      return;
    }
    std::ostringstream os;
    os << detail << ": got " << to_string(got.shape()) << ", oracle "
       << to_string(want.shape()) << ", max |diff| = " << d;
    check(false, os.str());
  }
  PropertyResult done() { return std::move(r_); }

private:
  PropertyResult r_;
};

std::string describe(const ConvParams &p, const Shape &in) {
  std::ostringstream os;
  os << "conv in=" << to_string(in) << " " << p.in_channels << "->"
     << p.out_channels << " k=" << p.kernel_h << "x" << p.kernel_w
     << " s=" << p.stride << " p=" << p.padding << " g=" << p.groups
     << (p.bias ? " bias" : "");
  return os.str();
}

bool within_unit(const Tensor4D &a, bool open) {
  for (float v : a.values())
    if (open ? !(v > 0.0f && v < 1.0f) : !(v >= 0.0f && v <= 1.0f))
      return false;
  return true;
}

bool bounded_by(const Tensor4D &out, const Tensor4D &x) {
  if (out.shape() != x.shape())
    return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::abs(out.values()[i]) > std::abs(x.values()[i]))
      return false;
  return true;
}

// ---- kernels ---------------------------------------------------------------

ConvParams random_conv(Sampler &s) {
  ConvParams p;
  const int kind = s.integer(0, 3); // 0 dense, 1 grouped, 2 depth-wise, 3 1x1
  const int groups = kind == 0 || kind == 3 ? 1 : s.integer(2, 4);
  if (kind == 2) {
    p.in_channels = p.out_channels = groups;
  } else {
    p.in_channels = groups * s.integer(1, 3);
    p.out_channels = groups * s.integer(1, 3);
  }
  p.groups = groups;
  p.kernel_h = kind == 3 ? 1 : s.integer(1, 7);
  p.kernel_w = kind == 3 ? 1 : (s.coin() ? p.kernel_h : s.integer(1, 7));
  p.stride = s.integer(1, 2);
  p.padding = s.integer(0, std::min(p.kernel_h, p.kernel_w) / 2);
  p.weights = Tensor4D(p.out_channels, p.in_channels / groups, p.kernel_h,
                       p.kernel_w);
  if (s.coin())
    p.bias = std::vector<float>(static_cast<std::size_t>(p.out_channels));
  randomize(p, s, 1.0f);
  return p;
}

SuiteResult kernels_suite(const VerifyOptions &opts) {
  const ConvImpl conv = opts.conv ? opts.conv : ConvImpl(&conv2d);
  Sampler s(opts.seed, 1);
  const int n = opts.kernel_instances;
  SuiteResult out{"kernels", {}};

  Property pc("conv2d matches direct oracle");
  Property pg("grouped conv2d equals per-group convolutions");
  for (int i = 0; i < n; ++i) {
    ConvParams p = random_conv(s);
    const Shape in{s.integer(1, 2), p.in_channels,
                   p.kernel_h + s.integer(0, 6), p.kernel_w + s.integer(0, 6)};
    const Tensor4D x = random_tensor(s, in);
    std::string detail = describe(p, in);
    try {
      pc.near(conv(x, p), oracle::conv2d(x, p), detail);
    } catch (const Error &e) {
      pc.check(false, detail + ": threw " + e.what());
    }
    if (p.groups == 1)
      continue;
    // Slice channels per group and convolve each slice independently.
    const int ipg = p.in_channels / p.groups, opg = p.out_channels / p.groups;
    const Tensor4D whole = conv(x, p);
    bool ok = true;
    for (int g = 0; g < p.groups && ok; ++g) {
      ConvParams sub = p;
      sub.in_channels = ipg;
      sub.out_channels = opg;
      sub.groups = 1;
      sub.weights = Tensor4D(opg, ipg, p.kernel_h, p.kernel_w);
      for (int o = 0; o < opg; ++o)
        for (int j = 0; j < ipg; ++j)
          for (int ky = 0; ky < p.kernel_h; ++ky)
            for (int kx = 0; kx < p.kernel_w; ++kx)
              sub.weights.at(o, j, ky, kx) =
                  p.weights.at(g * opg + o, j, ky, kx);
      if (p.bias)
        sub.bias = std::vector<float>(p.bias->begin() + g * opg,
                                      p.bias->begin() + (g + 1) * opg);
      Tensor4D slice(in.n, ipg, in.h, in.w);
      for (int b = 0; b < in.n; ++b)
        for (int j = 0; j < ipg; ++j)
          std::copy_n(x.plane(b, g * ipg + j).begin(), in.h * in.w,
                      slice.plane(b, j).begin());
      const Tensor4D part = conv(slice, sub);
      for (int b = 0; b < in.n && ok; ++b)
        for (int o = 0; o < opg && ok; ++o) {
          if (whole.shape().h != part.h() || whole.shape().w != part.w()) {
            ok = false;
            break;
          }
          const auto a = whole.plane(b, g * opg + o);
          const auto c = part.plane(b, o);
          for (std::size_t e = 0; e < a.size() && ok; ++e)
            ok = std::abs(a[e] - c[e]) < kOracleTolerance;
        }
    }
    pg.check(ok, detail);
  }
  out.properties.push_back(pc.done());
  out.properties.push_back(pg.done());

  Property pool("adaptive and channel pooling match scans");
  Property up("upsampling matches per-pixel formulas");
  Property shuf("channel_shuffle matches permutation and inverts");
  Property elem("BN and activations match scalar formulas");
  for (int i = 0; i < n; ++i) {
    const Shape sh{s.integer(1, 2), s.integer(1, 8), s.integer(1, 9),
                   s.integer(1, 9)};
    const Tensor4D x = random_tensor(s, sh, -3.0f, 3.0f);
    const std::string d = "input " + to_string(sh);
    for (PoolMode m : {PoolMode::Max, PoolMode::Avg}) {
      const char *tag = m == PoolMode::Max ? " max" : " avg";
      pool.near(adaptive_pool_1x1(x, m), oracle::adaptive_pool(x, m),
                d + tag + " adaptive");
      pool.near(channel_pool(x, m), oracle::channel_pool(x, m),
                d + tag + " channel");
    }
    up.near(upsample2x(x, UpsampleMode::Nearest), oracle::upsample_nearest2x(x),
            d + " nearest 2x");
    up.near(upsample2x(x, UpsampleMode::Bilinear),
            oracle::resize_bilinear(x, 2 * sh.h, 2 * sh.w), d + " bilinear 2x");
    const int oh = s.integer(1, 20), ow = s.integer(1, 20);
    up.near(resize_bilinear(x, oh, ow), oracle::resize_bilinear(x, oh, ow),
            d + " bilinear to " + std::to_string(oh) + "x" +
                std::to_string(ow));

    std::vector<int> divisors;
    for (int g = 1; g <= sh.c; ++g)
      if (sh.c % g == 0)
        divisors.push_back(g);
    const int g = divisors[static_cast<std::size_t>(
        s.integer(0, static_cast<int>(divisors.size()) - 1))];
    const std::string ds = d + " groups " + std::to_string(g);
    const Tensor4D y = channel_shuffle(x, g);
    shuf.near(y, oracle::channel_shuffle(x, g), ds);
    shuf.check(channel_shuffle(y, sh.c / g) == x, ds + ": inverse failed");

    NormParams bn = NormParams::identity(sh.c);
    randomize(bn, s);
    elem.near(batchnorm_infer(x, bn), oracle::batchnorm(x, bn), d + " bn");
    elem.near(relu(x), oracle::relu(x), d + " relu");
    elem.near(relu6(x), oracle::relu6(x), d + " relu6");
    elem.near(sigmoid(x), oracle::sigmoid(x), d + " sigmoid");
  }
  out.properties.push_back(pool.done());
  out.properties.push_back(up.done());
  out.properties.push_back(shuf.done());
  out.properties.push_back(elem.done());
  return out;
}

// ---- blocks ----------------------------------------------------------------

void randomize_gate(GateParams &g, Sampler &s) {
  randomize(g.gc_g, s);
  randomize(g.gc_x, s);
  randomize(g.psi, s);
  randomize(g.bn_g, s);
  randomize(g.bn_x, s);
  randomize(g.bn_psi, s);
}

MSCBParams random_mscb(Sampler &s, int c, const std::vector<int> &ks,
                       MsdcArrangement arr) {
  MSCBParams p = make_mscb(c, s.integer(1, 6), ks, s.integer(1, 3), arr);
  randomize(p.pwc1, s);
  randomize(p.bn1, s);
  for (auto &b : p.dwcbs) {
    randomize(b.conv, s);
    randomize(b.bn, s);
  }
  randomize(p.pwc2, s);
  randomize(p.bn2, s);
  return p;
}

std::vector<int> random_kernel_set(Sampler &s) {
  std::vector<int> ks;
  for (int k : {1, 3, 5, 7})
    if (s.coin())
      ks.push_back(k);
  if (ks.empty())
    ks.push_back(3);
  return ks;
}

SuiteResult blocks_suite(const VerifyOptions &opts) {
  Sampler s(opts.seed, 2);
  SuiteResult out{"blocks", {}};
  Property bound("gating bound |out| <= |x| (LGAG, AG, CAB, SAB)");
  Property maps("attention maps lie in (0, 1)");
  Property comp("blocks match oracle compositions");
  Property mscam("mscam equals mscb(sab(cab(x)))");
  Property inv("channel_shuffle inverse identity");
  Property par("parallel MSDC invariant to kernel order");
  Property seq("sequential MSDC sensitive to kernel order");

  for (int i = 0; i < opts.block_instances; ++i) {
    const int n = s.integer(1, 2), h = s.integer(2, 10), w = s.integer(2, 10);
    // Gates: skip g and upsampled x share spatial size; F_int and groups
    // follow the ratio scheme with a random divisor structure.
    const int groups = s.integer(1, 4);
    const int c = groups * s.integer(1, 3);
    const int f_int = groups * s.integer(1, 2);
    const Tensor4D g = random_tensor(s, {n, c, h, w});
    const Tensor4D x = random_tensor(s, {n, c, h, w});
    const std::string d = "n=" + std::to_string(n) + " c=" +
                          std::to_string(c) + " " + std::to_string(h) + "x" +
                          std::to_string(w);

    GateParams lg = make_lgag(c, c, f_int, groups);
    randomize_gate(lg, s);
    GateParams ag = make_ag(c, c, f_int);
    randomize_gate(ag, s);
    CABParams cab = make_cab(c, s.integer(1, 16));
    randomize(cab.reduce, s);
    randomize(cab.expand, s);
    SABParams sab = make_sab(2 * s.integer(0, 3) + 1);
    randomize(sab.lkc, s);

    const Tensor4D lg_out = lgag_forward(lg, g, x);
    const Tensor4D ag_out = ag_forward(ag, g, x);
    const Tensor4D cab_out = cab_forward(cab, x);
    const Tensor4D sab_out = sab_forward(sab, x);
    bound.check(bounded_by(lg_out, x), d + " LGAG");
    bound.check(bounded_by(ag_out, x), d + " AG");
    bound.check(bounded_by(cab_out, x), d + " CAB");
    bound.check(bounded_by(sab_out, x), d + " SAB");
    maps.check(within_unit(gate_attention(lg, g, x), true), d + " LGAG map");
    maps.check(within_unit(gate_attention(ag, g, x), true), d + " AG map");
    maps.check(within_unit(cab_attention(cab, x), true), d + " CAB map");
    maps.check(within_unit(sab_attention(sab, x), true), d + " SAB map");

    comp.near(lg_out, oracle::gate(lg, g, x), d + " LGAG");
    comp.near(ag_out, oracle::gate(ag, g, x), d + " AG");
    comp.near(cab_out, oracle::cab(cab, x), d + " CAB");
    comp.near(sab_out, oracle::sab(sab, x), d + " SAB");

    const auto arr = s.coin() ? MsdcArrangement::Parallel
                              : MsdcArrangement::Sequential;
    MSCBParams mb = random_mscb(s, c, random_kernel_set(s), arr);
    const Tensor4D mb_out = mscb_forward(mb, x);
    comp.near(mb_out, oracle::mscb(mb, x),
              d + " MSCB " + to_string(arr) + " e=" +
                  std::to_string(mb.expansion_factor));
    EUCBParams eu = make_eucb(c, s.integer(1, 6),
                              s.coin() ? UpsampleMode::Nearest
                                       : UpsampleMode::Bilinear);
    randomize(eu.dwc, s);
    randomize(eu.bn, s);
    randomize(eu.proj, s);
    comp.near(eucb_forward(eu, x), oracle::eucb(eu, x),
              d + " EUCB " + to_string(eu.upsample));

    mscam.near(mscam_forward(cab, sab, mb, x),
               oracle::mscb(mb, oracle::sab(sab, oracle::cab(cab, x))), d);

    const int ex = mb.expanded();
    const Tensor4D wide = random_tensor(s, {n, ex, h, w});
    const Tensor4D shuffled = channel_shuffle(wide, mb.shuffle_groups);
    inv.check(channel_shuffle(shuffled, ex / mb.shuffle_groups) == wide,
              d + " width " + std::to_string(ex) + " groups " +
                  std::to_string(mb.shuffle_groups));

    // Reordering the branches (each keeps its own weights) must not matter
    // for the parallel sum, and must matter for the sequential chain.
    MSCBParams pm = random_mscb(s, c, {1, 3, 5}, MsdcArrangement::Parallel);
    MSCBParams pr = pm;
    std::reverse(pr.dwcbs.begin(), pr.dwcbs.end());
    const Tensor4D e = random_tensor(s, {n, pm.expanded(), h, w});
    par.near(msdc_forward(pr, e), msdc_forward(pm, e), d + " KS [5,3,1]");

    MSCBParams sm = random_mscb(s, c, {1, 3}, MsdcArrangement::Sequential);
    // Positive shifts keep the ReLU6 branches active, so the instance is not
    // degenerate (two all-zero branches commute trivially).
    for (auto &b : sm.dwcbs)
      for (float &v : b.bn.beta)
        v = s.uniform(0.5f, 1.0f);
    MSCBParams sr = sm;
    std::reverse(sr.dwcbs.begin(), sr.dwcbs.end());
    const Tensor4D es = random_tensor(s, {n, sm.expanded(), h, w});
    const double diff =
        oracle::max_abs_diff(msdc_forward(sm, es), msdc_forward(sr, es));
    seq.check(diff > 1e-4, d + " KS [1,3] vs [3,1] differ by only " +
                               std::to_string(diff));
  }
  for (Property *p : {&bound, &maps, &comp, &mscam, &inv, &par, &seq})
    out.properties.push_back(p->done());
  return out;
}

// ---- decoder graph ---------------------------------------------------------

DecoderConfig small_config(int num_classes) {
  DecoderConfig cfg;
  cfg.channels = {8, 16, 24, 32};
  cfg.num_classes = num_classes;
  return cfg;
}

// The cascade written out directly from block forwards.
PredictionMaps hand_wired(const Decoder &dec, const PyramidFeatures &f) {
  const DecoderConfig &cfg = dec.config();
  PredictionMaps maps;
  Tensor4D prev;
  for (const DecoderStage &st : dec.stages()) {
    const Tensor4D &skip = f.x[st.level - 1];
    Tensor4D fused;
    if (!st.eucb) {
      fused = skip;
    } else {
      const Tensor4D u = eucb_forward(*st.eucb, prev);
      Tensor4D s = skip;
      if (st.gate)
        s = cfg.gate == GateKind::Lgag ? lgag_forward(*st.gate, skip, u)
                                       : ag_forward(*st.gate, skip, u);
      fused = add(u, s);
    }
    Tensor4D d = fused;
    if (st.mscam)
      d = mscam_forward(st.mscam->cab, st.mscam->sab, st.mscam->mscb, fused);
    maps.p[4 - st.level] = seg_head_forward(st.head, d);
    prev = d;
  }
  return maps;
}

bool maps_equal(const PredictionMaps &a, const PredictionMaps &b) {
  for (int i = 0; i < 4; ++i)
    if (!(a.p[i] == b.p[i]))
      return false;
  return true;
}

std::string toggles(const DecoderConfig &cfg) {
  return std::string("cascaded=") + (cfg.cascaded ? "1" : "0") +
         " lgag=" + (cfg.use_lgag ? "1" : "0") +
         " mscam=" + (cfg.use_mscam ? "1" : "0") + " gate=" +
         to_string(cfg.gate);
}

SuiteResult graph_suite(const VerifyOptions &opts) {
  Sampler s(opts.seed, 3);
  SuiteResult out{"graph", {}};
  Property det("forward is deterministic");
  Property shapes("map shapes follow the stage schedule");
  Property zero("zero features give head-bias maps");
  Property wired("decoder equals hand-wired cascade for every toggle set");
  Property open("saturated gate passes u through (d = MSCAM(2u))");
  Property mismatch("width mismatch names the stage");

  const int trials = std::max(1, opts.block_instances / 20);
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(t);
    DecoderConfig cfg = small_config(s.integer(1, 4));
    cfg.msdc_arrangement = s.coin() ? MsdcArrangement::Parallel
                                    : MsdcArrangement::Sequential;
    const int side = 32 * s.integer(1, 2);
    const int batch = s.integer(1, 2);
    const PyramidFeatures f =
        synth_features(cfg, side, side, seed, FeatureFill::Uniform, batch);
    const Decoder dec = build_decoder(cfg, seed);
    const PredictionMaps a = decoder_forward(dec, f);
    const PredictionMaps b = decoder_forward(build_decoder(cfg, seed), f);
    det.check(maps_equal(a, b), "seed " + std::to_string(seed));

    for (int i = 0; i < 4; ++i) {
      const int scale = 32 >> i;
      const Shape want{batch, cfg.num_classes, side / scale, side / scale};
      shapes.check(a.p[i].shape() == want,
                   "p" + std::to_string(i + 1) + " is " +
                       to_string(a.p[i].shape()) + ", expected " +
                       to_string(want));
    }

    // Zero every non-head bias; zero features then leave only head biases.
    Decoder quiet = build_decoder(cfg, seed);
    for (auto &ref : tensor_refs(quiet))
      if (ref.name.ends_with(".bias") && !ref.name.ends_with("head.bias"))
        std::fill(ref.values.begin(), ref.values.end(), 0.0f);
    const PredictionMaps z = decoder_forward(
        quiet, synth_features(cfg, side, side, seed, FeatureFill::Zeros, batch));
    for (int i = 0; i < 4; ++i) {
      const DecoderStage &st = quiet.stages()[static_cast<std::size_t>(i)];
      bool ok = true;
      for (int bb = 0; bb < batch; ++bb)
        for (int k = 0; k < cfg.num_classes; ++k)
          for (float v : z.p[i].plane(bb, k))
            ok = ok && v == (*st.head.bias)[static_cast<std::size_t>(k)];
      zero.check(ok, "p" + std::to_string(i + 1) + " not constant head bias");
    }

    for (int mask = 0; mask < 8; ++mask) {
      DecoderConfig tc = cfg;
      tc.cascaded = mask & 1;
      tc.use_lgag = (mask & 2) != 0;
      tc.use_mscam = (mask & 4) != 0;
      if (tc.use_lgag && !tc.cascaded)
        continue;
      for (GateKind kind : {GateKind::Lgag, GateKind::Ag}) {
        tc.gate = kind;
        const Decoder td = build_decoder(tc, seed);
        wired.check(maps_equal(decoder_forward(td, f), hand_wired(td, f)),
                    toggles(tc));
      }
    }

    // Open gate: push the psi normalization far positive.
    Decoder gated = build_decoder(cfg, seed);
    for (auto &st : gated.stages())
      if (st.gate)
        std::fill(st.gate->bn_psi.beta.begin(), st.gate->bn_psi.beta.end(),
                  1e4f);
    const PredictionMaps og = decoder_forward(gated, f);
    Tensor4D prev;
    bool ok = true;
    std::string where;
    for (const DecoderStage &st : gated.stages()) {
      Tensor4D d;
      if (!st.eucb) {
        d = mscam_forward(st.mscam->cab, st.mscam->sab, st.mscam->mscb,
                          f.x[st.level - 1]);
      } else {
        const Tensor4D u = eucb_forward(*st.eucb, prev);
        d = mscam_forward(st.mscam->cab, st.mscam->sab, st.mscam->mscb,
                          add(u, u));
        if (!(seg_head_forward(st.head, d) == og.p[4 - st.level]) && ok) {
          ok = false;
          where = "stage" + std::to_string(st.level);
        }
      }
      prev = d;
    }
    open.check(ok, where);

    PyramidFeatures bad = f;
    const int lvl = s.integer(1, 4);
    Shape sh = bad.x[lvl - 1].shape();
    sh.c += 1;
    bad.x[lvl - 1] = Tensor4D(sh);
    const std::string stage = "stage" + std::to_string(lvl);
    try {
      (void)decoder_forward(dec, bad);
      mismatch.check(false, stage + " accepted a wrong width");
    } catch (const ShapeError &e) {
      mismatch.check(std::string(e.what()).find(stage) != std::string::npos,
                     std::string("message lacks ") + stage + ": " + e.what());
    }
  }
  for (Property *p : {&det, &shapes, &zero, &wired, &open, &mismatch})
    out.properties.push_back(p->done());
  return out;
}

// ---- cost ------------------------------------------------------------------

std::uint64_t cab_fc_flops(const CostReport &r) {
  std::uint64_t total = 0;
  for (const auto &stage : r.root.children)
    for (const char *leaf : {"mscam.cab.reduce", "mscam.cab.expand"})
      if (const CostNode *n = r.find(stage.name + "." + leaf))
        total += n->flops;
  return total;
}

// Closed-form three-gate parameter count for a ratio choice, or nullopt if
// some gate cannot be grouped that way.
std::optional<std::uint64_t> gate_params_closed_form(
    const std::array<int, 4> &ch, int divisor, int per_group) {
  std::uint64_t total = 0;
  for (int i = 0; i < 3; ++i) {
    const int c = ch[static_cast<std::size_t>(i)];
    if (c % divisor || c % per_group)
      return std::nullopt;
    const std::uint64_t f = static_cast<std::uint64_t>(c / divisor);
    const std::uint64_t groups = static_cast<std::uint64_t>(c / per_group);
    if (f == 0 || f % groups)
      return std::nullopt;
    // two grouped 3x3 projections with bias, two BNs, psi with bias, BN(1)
    total += 2 * (f * per_group * 9 + f) + 4 * f + (f + 1) + 2;
  }
  return total;
}

SuiteResult cost_suite(const VerifyOptions &opts) {
  Sampler s(opts.seed, 4);
  SuiteResult out{"cost", {}};
  Property ser("param count equals serialized scalar count");
  Property quad("FLOPs scale quadratically (CAB FC term fixed)");
  Property additive("MSCAM toggle removes exactly its subtree");
  Property calib("gate defaults minimize distance to 11.01K");

  std::vector<DecoderConfig> configs{DecoderConfig::standard(),
                                     DecoderConfig::tiny()};
  for (int i = 0; i < std::max(4, opts.block_instances / 10); ++i) {
    DecoderConfig cfg;
    const int base = 2 * s.integer(1, 8);
    cfg.channels = {base, 2 * base, 3 * base, 4 * base};
    cfg.kernel_set = random_kernel_set(s);
    cfg.expansion_factor = s.integer(1, 3);
    cfg.num_classes = s.integer(1, 9);
    cfg.cascaded = s.coin();
    cfg.use_lgag = cfg.cascaded && s.coin();
    cfg.use_mscam = s.coin();
    cfg.gate = s.coin() ? GateKind::Lgag : GateKind::Ag;
    configs.push_back(cfg);
  }

  for (const DecoderConfig &cfg : configs) {
    const std::string d = "channels " + std::to_string(cfg.channels[0]) +
                          ".." + std::to_string(cfg.channels[3]) + " " +
                          toggles(cfg);
    const Decoder dec = build_decoder(cfg, opts.seed);
    const auto counted = count_params(dec).total_params();
    const auto stored = bundle_from(dec).parameter_scalars();
    ser.check(counted == stored, d + ": counted " + std::to_string(counted) +
                                     " vs stored " + std::to_string(stored));

    const int h = 32 * s.integer(1, 4), w = 32 * s.integer(1, 4);
    const CostReport one = count_flops(dec, h, w);
    const CostReport two = count_flops(dec, 2 * h, 2 * w);
    const std::uint64_t fc = cab_fc_flops(one);
    quad.check(two.total_flops() == 4 * one.total_flops() - 3 * fc &&
                   cab_fc_flops(two) == fc,
               d + " @" + std::to_string(h) + "x" + std::to_string(w));

    if (cfg.use_mscam) {
      DecoderConfig off = cfg;
      off.use_mscam = false;
      const CostReport without = count_flops(build_decoder(off, 0), h, w);
      std::uint64_t sub_p = 0, sub_f = 0;
      for (const auto &stage : one.root.children)
        if (const CostNode *m = one.find(stage.name + ".mscam")) {
          sub_p += m->params;
          sub_f += m->flops;
        }
      const CostReport pw = count_params(dec);
      const CostReport pwo = count_params(build_decoder(off, 0));
      additive.check(pw.total_params() - pwo.total_params() == sub_p &&
                         one.total_flops() - without.total_flops() == sub_f,
                     d);
    }
  }

  for (const auto &ch : {DecoderConfig::standard().channels,
                         DecoderConfig::tiny().channels}) {
    const std::uint64_t target = ch == DecoderConfig::standard().channels
                                     ? 11010
                                     : 5510;
    std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
    int best_div = 0, best_cpg = 0;
    for (int div : {1, 2, 4})
      for (int cpg = 1; cpg <= ch[0]; ++cpg)
        if (auto p = gate_params_closed_form(ch, div, cpg)) {
          const std::uint64_t dist = *p > target ? *p - target : target - *p;
          if (dist < best) {
            best = dist;
            best_div = div;
            best_cpg = cpg;
          }
        }
    const GateCalibration got = calibrate_gate_defaults(ch, target);
    calib.check(got.intermediate_divisor == best_div &&
                    got.channels_per_group == best_cpg,
                "search picked (" + std::to_string(got.intermediate_divisor) +
                    ", " + std::to_string(got.channels_per_group) +
                    "), closed form (" + std::to_string(best_div) + ", " +
                    std::to_string(best_cpg) + ")");
  }
  const DecoderConfig def;
  const GateCalibration std_cal =
      calibrate_gate_defaults(DecoderConfig::standard().channels, 11010);
  calib.check(std_cal.intermediate_divisor == def.lgag_intermediate_divisor &&
                  std_cal.channels_per_group == def.lgag_channels_per_group,
              "config defaults differ from calibrated choice");

  for (Property *p : {&ser, &quad, &additive, &calib})
    out.properties.push_back(p->done());
  return out;
}

// ---- losses and metrics ----------------------------------------------------

Tensor4D random_mask(Sampler &s, Shape sh, float density) {
  Tensor4D m(sh);
  for (float &v : m.values())
    v = s.uniform(0.0f, 1.0f) < density ? 1.0f : 0.0f;
  return m;
}

// Blob masks give realistic boundaries for HD95.
Tensor4D random_blob(Sampler &s, int h, int w) {
  Tensor4D m(1, 1, h, w);
  const int blobs = s.integer(1, 3);
  for (int b = 0; b < blobs; ++b) {
    const int cy = s.integer(0, h - 1), cx = s.integer(0, w - 1);
    const int r = s.integer(1, std::max(1, h / 3));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r)
          m.at(0, 0, y, x) = 1.0f;
  }
  return m;
}

SuiteResult loss_suite(const VerifyOptions &opts) {
  Sampler s(opts.seed, 5);
  SuiteResult out{"loss", {}};
  Property mut("mutation loss equals 15-subset enumeration bit-for-bit");
  Property mean("mean reduction is sum / 15");
  Property dice("DICE = 2 IoU / (1 + IoU)");
  Property hd_same("hd95 of identical masks is 0");
  Property hd_oracle("hd95 matches all-pairs oracle");
  Property perfect("perfect-prediction losses < 1e-4");

  const BaseLoss bce = [](const Tensor4D &p, const Tensor4D &t) {
    return bce_iou_weighted(p, t);
  };
  const BaseLoss ced = [](const Tensor4D &p, const Tensor4D &t) {
    return ce_dice_loss(p, t);
  };

  for (int i = 0; i < opts.loss_instances; ++i) {
    const int n = s.integer(1, 2), side = 4 * s.integer(2, 8);
    const bool multi = s.coin();
    const int k = multi ? s.integer(2, 4) : 1;
    PredictionMaps maps;
    for (int j = 0; j < 4; ++j) {
      const int ms = side >> (3 - j) > 0 ? side >> (3 - j) : 1;
      maps.p[j] = random_tensor(s, {n, k, ms, ms}, -4.0f, 4.0f);
    }
    Tensor4D target;
    if (multi) {
      target = Tensor4D(n, 1, side, side);
      for (float &v : target.values())
        v = static_cast<float>(s.integer(0, k - 1));
    } else {
      target = random_mask(s, {n, 1, side, side}, 0.4f);
    }
    const BaseLoss &base = multi ? ced : bce;
    const std::string d = std::string(multi ? "ce_dice" : "bce_iou") +
                          " n=" + std::to_string(n) + " side " +
                          std::to_string(side);
    const double lib = mutation_loss(maps, target, base);
    const double enumd = oracle::mutation_enumeration(maps, target, base);
    mut.check(lib == enumd, d + ": " + std::to_string(lib) + " vs " +
                                std::to_string(enumd));
    const double m = mutation_loss(maps, target, base, SubsetReduction::Mean);
    mean.check(m == lib / 15.0, d);

    const Tensor4D a = random_mask(s, {1, 1, side, side}, 0.5f);
    const Tensor4D b = random_mask(s, {1, 1, side, side}, 0.5f);
    const double di = dice_score(a, b) / 100.0, io = iou_score(a, b) / 100.0;
    dice.check(std::abs(di - 2 * io / (1 + io)) < 1e-9,
               "dice " + std::to_string(di) + " iou " + std::to_string(io));

    const Tensor4D blob = random_blob(s, side, side);
    const auto same = hd95(blob, blob);
    hd_same.check(same && *same == 0.0, "side " + std::to_string(side));
    const Tensor4D other = random_blob(s, side, side);
    const auto got = hd95(blob, other);
    const double want = oracle::hd95_pairwise(blob, other);
    hd_oracle.check(got && std::abs(*got - want) < 1e-9,
                    "side " + std::to_string(side) + ": " +
                        std::to_string(got.value_or(-1)) + " vs " +
                        std::to_string(want));

    // Perfect predictions: confident logits agreeing with the target.
    const Tensor4D mask = random_mask(s, {n, 1, side, side}, 0.5f);
    Tensor4D logits(mask.shape());
    for (std::size_t e = 0; e < mask.size(); ++e)
      logits.values()[e] = mask.values()[e] > 0.5f ? 30.0f : -30.0f;
    const double l1 = bce_iou_weighted(logits, mask);
    perfect.check(l1 < 1e-4, "bce_iou " + std::to_string(l1));
    Tensor4D labels(n, 1, side, side);
    Tensor4D onehot(n, k + 1, side, side, -30.0f);
    for (int bb = 0; bb < n; ++bb)
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
          const int cls = (x + y + bb) % (k + 1);
          labels.at(bb, 0, y, x) = static_cast<float>(cls);
          onehot.at(bb, cls, y, x) = 30.0f;
        }
    const double l2 = ce_dice_loss(onehot, labels);
    perfect.check(l2 < 1e-4, "ce_dice " + std::to_string(l2));
  }
  for (Property *p : {&mut, &mean, &dice, &hd_same, &hd_oracle, &perfect})
    out.properties.push_back(p->done());
  return out;
}

} // namespace

std::optional<VerifySuite> parse_suite(std::string_view name) {
  if (name == "kernels")
    return VerifySuite::Kernels;
  if (name == "blocks")
    return VerifySuite::Blocks;
  if (name == "graph")
    return VerifySuite::Graph;
  if (name == "cost")
    return VerifySuite::Cost;
  if (name == "loss")
    return VerifySuite::Loss;
  if (name == "all")
    return VerifySuite::All;
  return std::nullopt;
}

std::string to_string(VerifySuite s) {
  switch (s) {
  case VerifySuite::Kernels:
    return "kernels";
  case VerifySuite::Blocks:
    return "blocks";
  case VerifySuite::Graph:
    return "graph";
  case VerifySuite::Cost:
    return "cost";
  case VerifySuite::Loss:
    return "loss";
  case VerifySuite::All:
    return "all";
  }
  return "?";
}

bool SuiteResult::pass() const noexcept {
  return !properties.empty() &&
         std::all_of(properties.begin(), properties.end(),
                     [](const PropertyResult &p) { return p.pass(); });
}

int SuiteResult::instances() const noexcept {
  int n = 0;
  for (const auto &p : properties)
    n += p.instances;
  return n;
}

const PropertyResult *SuiteResult::first_failure() const noexcept {
  for (const auto &p : properties)
    if (!p.pass())
      return &p;
  return nullptr;
}

SuiteResult verify_kernels(const VerifyOptions &o) { return kernels_suite(o); }
SuiteResult verify_blocks(const VerifyOptions &o) { return blocks_suite(o); }
SuiteResult verify_graph(const VerifyOptions &o) { return graph_suite(o); }
SuiteResult verify_cost(const VerifyOptions &o) { return cost_suite(o); }
SuiteResult verify_loss(const VerifyOptions &o) { return loss_suite(o); }

std::vector<SuiteResult> run_verify(VerifySuite suite,
                                    const VerifyOptions &opts) {
  std::vector<SuiteResult> out;
  auto want = [&](VerifySuite s) {
    return suite == VerifySuite::All || suite == s;
  };
  if (want(VerifySuite::Kernels))
    out.push_back(kernels_suite(opts));
  if (want(VerifySuite::Blocks))
    out.push_back(blocks_suite(opts));
  if (want(VerifySuite::Graph))
    out.push_back(graph_suite(opts));
  if (want(VerifySuite::Cost))
    out.push_back(cost_suite(opts));
  if (want(VerifySuite::Loss))
    out.push_back(loss_suite(opts));
  return out;
}

ConvImpl wrong_padding_conv() {
  return [](const Tensor4D &x, const ConvParams &p) {
    ConvParams q = p;
    q.padding = std::max(0, p.padding - 1);
    return conv2d(x, q);
  };
}

Tensor4D random_tensor(Sampler &s, Shape shape, float lo, float hi) {
  Tensor4D t(shape);
  for (float &v : t.values())
    v = s.uniform(lo, hi);
  return t;
}

void randomize(ConvParams &p, Sampler &s, float scale) {
  for (float &v : p.weights.values())
    v = s.uniform(-scale, scale);
  if (p.bias)
    for (float &v : *p.bias)
      v = s.uniform(-scale, scale);
}

void randomize(NormParams &p, Sampler &s) {
  for (std::size_t c = 0; c < p.gamma.size(); ++c) {
    p.gamma[c] = s.uniform(0.5f, 1.5f);
    p.beta[c] = s.uniform(-0.5f, 0.5f);
    p.running_mean[c] = s.uniform(-0.5f, 0.5f);
    p.running_var[c] = s.uniform(0.5f, 2.0f);
  }
}

} // namespace emcad
