// emcad: cost analysis, forward passes, property suites and loss evaluation.
//
// Exit codes: 0 success, 1 tolerance or property failure, 2 usage, config or
// format error.

#include "emcad/config.hpp"
#include "emcad/cost.hpp"
#include "emcad/decoder.hpp"
#include "emcad/errors.hpp"
#include "emcad/losses.hpp"
#include "emcad/metrics.hpp"
#include "emcad/tensor_io.hpp"
#include "emcad/verify.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace emcad;

namespace {

constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

std::string read_text(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::string config;
  std::vector<int> res;
  std::string format = "text";
  bool full = false;
  std::string expect;
  bool gates = false;
  bool ablation = false;
};

void print_ablation(const DecoderConfig &base, int h, int w,
                    FlopConvention conv) {
  std::printf("%-9s %-5s %-6s %12s %14s\n", "cascaded", "lgag", "mscam",
              "params", "flops");
  for (int mask = 0; mask < 8; ++mask) {
    DecoderConfig cfg = base;
    cfg.cascaded = mask & 4;
    cfg.use_lgag = (mask & 2) != 0;
    cfg.use_mscam = (mask & 1) != 0;
    if (cfg.use_lgag && !cfg.cascaded)
      continue;
    const CostReport r = count_flops(build_decoder(cfg, 0), h, w, conv);
    std::printf("%-9s %-5s %-6s %12s %14s\n", cfg.cascaded ? "yes" : "no",
                cfg.use_lgag ? "yes" : "no", cfg.use_mscam ? "yes" : "no",
                format_scaled(static_cast<double>(r.body_params()), 'M', 3).c_str(),
                format_scaled(static_cast<double>(r.body_flops()), 'G', 3).c_str());
  }
}

int run_analyze(const AnalyzeArgs &a) {
  const ConfigFile cf = load_config(a.config);
  int h = cf.run.input_h, w = cf.run.input_w;
  if (!a.res.empty()) {
    h = a.res[0];
    w = a.res[1];
  }
  if (h <= 0 || w <= 0 || h % 32 || w % 32)
    throw ConfigError("--res must be positive multiples of 32");
  const FlopConvention conv =
      a.full ? FlopConvention::Full : FlopConvention::Macs;
  const TableFormat fmt =
      a.format == "csv" ? TableFormat::Csv : TableFormat::Text;
  const Decoder dec = build_decoder(cf.decoder, cf.run.seed);
  const CostReport report = count_flops(dec, h, w, conv);
  std::cout << render_table(report, fmt);

  if (a.gates) {
    const GateComparison gc = compare_gate_costs(cf.decoder, h, w, conv);
    std::printf("gates LGAG: %s params / %s FLOPs\n",
                format_si(static_cast<double>(gc.lgag.total_params()), 2).c_str(),
                format_si(static_cast<double>(gc.lgag.total_flops()), 2).c_str());
    std::printf("gates AG:   %s params / %s FLOPs\n",
                format_si(static_cast<double>(gc.ag.total_params()), 2).c_str(),
                format_si(static_cast<double>(gc.ag.total_flops()), 2).c_str());
  }
  if (a.ablation)
    print_ablation(cf.decoder, h, w, conv);

  if (a.expect.empty())
    return kOk;
  const auto results =
      check_expectations(report, parse_expectations(read_text(a.expect)));
  int failed = 0;
  for (const auto &r : results) {
    const bool ok = r.pass();
    failed += !ok;
    std::printf("%s %s expected %.6g +/- %.3g%% actual %s\n",
                ok ? "PASS" : "FAIL", r.expectation.key.c_str(),
                r.expectation.expected, 100.0 * r.expectation.rel_tol,
                r.found ? std::to_string(static_cast<long long>(r.actual)).c_str()
                        : "missing");
  }
  return failed ? kFail : kOk;
}

// ---- forward / features ----------------------------------------------------

struct ForwardArgs {
  std::string config;
  std::string features;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string aggregate = "final";
  std::string weights;
  std::string save_weights;
};

int run_forward(const ForwardArgs &a) {
  const ConfigFile cf = load_config(a.config);
  const std::uint64_t seed = a.seed.value_or(cf.run.seed);
  Decoder dec = build_decoder(cf.decoder, seed);
  if (!a.weights.empty())
    load_into(dec, load_bundle(a.weights));
  const PyramidFeatures f =
      a.features.empty()
          ? synth_features(cf.decoder, cf.run.input_h, cf.run.input_w, seed,
                           FeatureFill::Uniform, cf.run.batch)
          : load_features(a.features);
  const PredictionMaps maps = decoder_forward(dec, f);
  // Input resolution is four times the shallowest feature map.
  const int in_h = 4 * f.x[0].h(), in_w = 4 * f.x[0].w();
  const Tensor4D agg = a.aggregate == "sum"
                           ? aggregate_predictions(maps, in_h, in_w)
                           : final_map(maps);
  fs::create_directories(a.out);
  for (int i = 0; i < 4; ++i)
    save_tensor(fs::path(a.out) / ("p" + std::to_string(i + 1) + ".emct"),
                maps.p[i]);
  save_tensor(fs::path(a.out) / "aggregate.emct", agg);
  if (!a.save_weights.empty())
    save_bundle(a.save_weights, bundle_from(dec));
  for (int i = 0; i < 4; ++i)
    std::printf("p%d %s\n", i + 1, to_string(maps.p[i].shape()).c_str());
  std::printf("aggregate (%s) %s\n", a.aggregate.c_str(),
              to_string(agg.shape()).c_str());
  return kOk;
}

struct FeatureArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string fill = "uniform";
};

int run_features(const FeatureArgs &a) {
  const ConfigFile cf = load_config(a.config);
  const FeatureFill fill = a.fill == "zeros"  ? FeatureFill::Zeros
                           : a.fill == "ramp" ? FeatureFill::Ramp
                                              : FeatureFill::Uniform;
  save_features(a.out, synth_features(cf.decoder, cf.run.input_h,
                                      cf.run.input_w,
                                      a.seed.value_or(cf.run.seed), fill,
                                      cf.run.batch));
  return kOk;
}

// ---- verify ----------------------------------------------------------------

struct VerifyArgs {
  std::string suite = "all";
  std::optional<std::uint64_t> seed;
  bool inject_fault = false;
};

int run_verify_cmd(const VerifyArgs &a) {
  const auto suite = parse_suite(a.suite);
  if (!suite) {
    std::cerr << "unknown suite '" << a.suite
              << "' (kernels|blocks|graph|cost|loss|all)\n";
    return kUsage;
  }
  VerifyOptions opts;
  if (a.seed)
    opts.seed = *a.seed;
  if (a.inject_fault)
    opts.conv = wrong_padding_conv();
  const auto results = run_verify(*suite, opts);
  bool ok = true;
  for (const auto &r : results) {
    for (const auto &p : r.properties)
      std::printf("%s %-8s %-58s %5d instances\n", p.pass() ? "PASS" : "FAIL",
                  r.suite.c_str(), p.name.c_str(), p.instances);
    if (const PropertyResult *f = r.first_failure()) {
      ok = false;
      std::printf("counterexample [%s / %s]: %s\n", r.suite.c_str(),
                  f->name.c_str(),
                  f->counterexample.empty() ? "(no instances)"
                                            : f->counterexample.c_str());
    }
  }
  std::printf("%s\n", ok ? "all properties hold" : "property failure");
  return ok ? kOk : kFail;
}

// ---- loss ------------------------------------------------------------------

struct LossArgs {
  std::vector<std::string> pred;
  std::string target;
  std::string loss = "bce_iou";
  std::string base;
  bool mean = false;
  bool metrics = false;
};

PredictionMaps load_maps(const std::vector<std::string> &paths) {
  PredictionMaps maps;
  if (paths.size() == 1 && fs::is_directory(paths[0])) {
    for (int i = 0; i < 4; ++i)
      maps.p[i] = load_tensor(fs::path(paths[0]) /
                              ("p" + std::to_string(i + 1) + ".emct"));
    return maps;
  }
  if (paths.size() != 4)
    throw ConfigError("map losses need four --pred files (p1..p4) or one "
                      "directory holding p1.emct..p4.emct");
  for (int i = 0; i < 4; ++i)
    maps.p[i] = load_tensor(paths[static_cast<std::size_t>(i)]);
  return maps;
}

// Per-class (or single-channel) masks of the prediction at target size.
void print_metrics(const Tensor4D &logits, const Tensor4D &target) {
  if (logits.n() != target.n() || logits.h() != target.h() ||
      logits.w() != target.w())
    throw ShapeError("metrics: prediction " + to_string(logits.shape()) +
                     " vs target " + to_string(target.shape()));
  const int classes = logits.c();
  double dice = 0, iou = 0, hd = 0;
  int dice_n = 0, hd_n = 0;
  for (int cls = classes == 1 ? 0 : 1; cls < classes; ++cls) {
    for (int b = 0; b < logits.n(); ++b) {
      Tensor4D pm(1, 1, logits.h(), logits.w()), gm(pm.shape());
      for (int y = 0; y < logits.h(); ++y)
        for (int x = 0; x < logits.w(); ++x) {
          bool on;
          if (classes == 1) {
            on = logits.at(b, 0, y, x) > 0.0f;
          } else {
            int best = 0;
            for (int k = 1; k < classes; ++k)
              if (logits.at(b, k, y, x) > logits.at(b, best, y, x))
                best = k;
            on = best == cls;
          }
          pm.at(0, 0, y, x) = on ? 1.0f : 0.0f;
          const float t = target.at(b, 0, y, x);
          gm.at(0, 0, y, x) =
              (classes == 1 ? t > 0.5f : std::lround(t) == cls) ? 1.0f : 0.0f;
        }
      dice += dice_score(pm, gm);
      iou += iou_score(pm, gm);
      ++dice_n;
      if (const auto h = hd95(pm, gm)) {
        hd += *h;
        ++hd_n;
      }
    }
  }
  std::printf("dice %.4f\niou %.4f\n", dice / dice_n, iou / dice_n);
  if (hd_n)
    std::printf("hd95 %.4f\n", hd / hd_n);
  else
    std::printf("hd95 undefined (empty mask)\n");
}

int run_loss(const LossArgs &a) {
  const Tensor4D target = load_tensor(a.target);
  auto pick_base = [&](int channels) -> BaseLoss {
    const std::string name =
        a.base.empty() ? (channels == 1 ? "bce_iou" : "ce_dice") : a.base;
    if (name == "bce_iou")
      return [](const Tensor4D &p, const Tensor4D &t) {
        return bce_iou_weighted(p, t);
      };
    return [](const Tensor4D &p, const Tensor4D &t) {
      return ce_dice_loss(p, t);
    };
  };
  Tensor4D metric_logits;
  double value = 0;
  if (a.loss == "bce_iou" || a.loss == "ce_dice") {
    if (a.pred.size() != 1)
      throw ConfigError("--loss " + a.loss + " takes exactly one --pred");
    metric_logits = load_tensor(a.pred[0]);
    if (metric_logits.shape().h != target.h() ||
        metric_logits.shape().w != target.w())
      throw ShapeError("prediction " + to_string(metric_logits.shape()) +
                       " vs target " + to_string(target.shape()));
    value = a.loss == "bce_iou" ? bce_iou_weighted(metric_logits, target)
                                : ce_dice_loss(metric_logits, target);
  } else {
    const PredictionMaps maps = load_maps(a.pred);
    const BaseLoss base = pick_base(maps.p[0].c());
    value = a.loss == "additive"
                ? additive_loss(maps, target, LossWeights{}, base)
                : mutation_loss(maps, target, base,
                                a.mean ? SubsetReduction::Mean
                                       : SubsetReduction::Sum);
    const PredictionMaps r = resize_maps(maps, target.h(), target.w());
    metric_logits = r.p[0];
    for (int i = 1; i < 4; ++i)
      metric_logits = add(metric_logits, r.p[i]);
  }
  std::printf("%s %.9g\n", a.loss.c_str(), value);
  if (a.metrics)
    print_metrics(metric_logits, target);
  return kOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"EMCAD decoder toolkit"};
  app.require_subcommand(1);

  AnalyzeArgs an;
  auto *analyze = app.add_subcommand("analyze", "parameter and FLOP report");
  analyze->add_option("config", an.config, "config file")->required();
  analyze->add_option("--res", an.res, "input height and width")
      ->expected(2);
  analyze->add_option("--format", an.format, "text or csv")
      ->check(CLI::IsMember({"text", "csv"}));
  analyze->add_flag("--full", an.full,
                    "count BN, activations, pooling and upsampling too");
  analyze->add_option("--expect", an.expect,
                      "CSV of key,expected,rel_tol rows to check");
  analyze->add_flag("--gates", an.gates, "compare LGAG and AG gate costs");
  analyze->add_flag("--ablation", an.ablation, "print the toggle ladder");

  ForwardArgs fw;
  auto *forward = app.add_subcommand("forward", "run the decoder");
  forward->add_option("config", fw.config, "config file")->required();
  auto *feat_opt =
      forward->add_option("--features", fw.features, "directory with x1..x4");
  forward->add_option("--seed", fw.seed, "seed for weights and features")
      ->excludes(feat_opt);
  forward->add_option("--out", fw.out, "output directory")->required();
  forward->add_option("--aggregate", fw.aggregate, "final or sum")
      ->check(CLI::IsMember({"final", "sum"}));
  forward->add_option("--weights", fw.weights, "weight bundle to load");
  forward->add_option("--save-weights", fw.save_weights,
                      "write the weights used to a bundle");

  FeatureArgs fa;
  auto *features =
      app.add_subcommand("features", "write synthetic encoder features");
  features->add_option("config", fa.config, "config file")->required();
  features->add_option("--seed", fa.seed, "feature seed");
  features->add_option("--out", fa.out, "output directory")->required();
  features->add_option("--fill", fa.fill, "uniform, zeros or ramp")
      ->check(CLI::IsMember({"uniform", "zeros", "ramp"}));

  VerifyArgs va;
  auto *verify = app.add_subcommand("verify", "run property suites");
  verify->add_option("--suite", va.suite, "kernels|blocks|graph|cost|loss|all");
  verify->add_option("--seed", va.seed, "instance seed");
  verify->add_flag("--inject-fault", va.inject_fault,
                   "test the kernel suite against a wrong-padding conv");

  LossArgs la;
  auto *loss = app.add_subcommand("loss", "evaluate a loss on tensor files");
  loss->add_option("--pred", la.pred, "prediction file(s) or map directory")
      ->required();
  loss->add_option("--target", la.target, "target tensor file")->required();
  loss->add_option("--loss", la.loss, "bce_iou|ce_dice|additive|mutation")
      ->check(CLI::IsMember({"bce_iou", "ce_dice", "additive", "mutation"}));
  loss->add_option("--base", la.base, "base loss for map losses")
      ->check(CLI::IsMember({"bce_iou", "ce_dice"}));
  loss->add_flag("--mean", la.mean, "average the mutation subsets");
  loss->add_flag("--metrics", la.metrics, "also print DICE, IoU and HD95");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*analyze)
      return run_analyze(an);
    if (*forward)
      return run_forward(fw);
    if (*features)
      return run_features(fa);
    if (*verify)
      return run_verify_cmd(va);
    if (*loss)
      return run_loss(la);
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
