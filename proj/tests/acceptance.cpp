// Acceptance criteria A1-A8. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Tolerances below are fixed; do not tune them.

#include "emcad/cost.hpp"
#include "emcad/decoder.hpp"
#include "emcad/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace emcad;
namespace fs = std::filesystem;

namespace {

constexpr double kParamTol = 0.02;
constexpr double kFlopTol = 0.10;
constexpr double kLadderParamTol = 0.05;
constexpr double kLadderFlopTol = 0.10;
constexpr double kGateTol = 0.05;
constexpr double kA1Seconds = 1.0;
constexpr double kA2Seconds = 1.0;
constexpr double kA5Seconds = 30.0;
constexpr double kA8Seconds = 10.0;
constexpr int kA5MinInstances = 200;
constexpr int kA6MinInstances = 100;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Check {
  bool ok = true;
  std::string detail;

  void near(const std::string &what, double actual, double expected,
            double tol) {
    const bool pass = std::abs(actual - expected) <= tol * expected;
    ok = ok && pass;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s%s %.6g vs %.6g (+/-%g%%)",
                  detail.empty() ? "" : "; ", what.c_str(), actual, expected,
                  tol * 100);
    detail += buf;
    if (!pass)
      detail += " OUT";
  }
  void require(const std::string &what, bool pass) {
    ok = ok && pass;
    detail += (detail.empty() ? "" : "; ") + what + (pass ? "" : " FAILED");
  }
  void within(const std::string &what, double secs, double limit) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s %.3fs < %.0fs", what.c_str(), secs,
                  limit);
    require(buf, secs < limit);
  }
};

DecoderConfig ladder(bool lgag, bool mscam) {
  DecoderConfig cfg = DecoderConfig::standard();
  cfg.use_lgag = lgag;
  cfg.use_mscam = mscam;
  return cfg;
}

Check a1() {
  Check c;
  const auto t0 = Clock::now();
  c.near("standard params",
         count_params(build_decoder(DecoderConfig::standard(), 0)).body_params(),
         1.91e6, kParamTol);
  c.near("tiny params",
         count_params(build_decoder(DecoderConfig::tiny(), 0)).body_params(),
         0.507e6, kParamTol);
  c.within("runtime", seconds_since(t0), kA1Seconds);
  return c;
}

Check a2() {
  Check c;
  const auto t0 = Clock::now();
  const Decoder std_dec = build_decoder(DecoderConfig::standard(), 0);
  c.near("standard@224 MACs", count_flops(std_dec, 224, 224).body_flops(),
         0.381e9, kFlopTol);
  c.near("standard@256 MACs", count_flops(std_dec, 256, 256).body_flops(),
         0.498e9, kFlopTol);
  c.near("tiny@224 MACs",
         count_flops(build_decoder(DecoderConfig::tiny(), 0), 224, 224).body_flops(),
         0.110e9, kFlopTol);
  c.within("runtime", seconds_since(t0), kA2Seconds);
  return c;
}

Check a3() {
  Check c;
  struct Row {
    const char *name;
    bool lgag, mscam;
    double params, flops;
  };
  for (const Row &r : {Row{"cascaded", false, false, 0.224e6, 0.100e9},
                       Row{"+lgag", true, false, 0.235e6, 0.108e9},
                       Row{"+mscam", false, true, 1.898e6, 0.373e9},
                       Row{"full", true, true, 1.91e6, 0.381e9}}) {
    const CostReport rep = count_flops(build_decoder(ladder(r.lgag, r.mscam), 0),
                                       224, 224);
    c.near(std::string(r.name) + " params", rep.body_params(), r.params,
           kLadderParamTol);
    c.near(std::string(r.name) + " MACs", rep.body_flops(), r.flops,
           kLadderFlopTol);
  }
  return c;
}

Check a4() {
  Check c;
  const GateComparison s = compare_gate_costs(DecoderConfig::standard(), 256, 256);
  c.near("std lgag params", s.lgag.total_params(), 11.01e3, kGateTol);
  c.near("std lgag flops", s.lgag.total_flops(), 10.47e6, kGateTol);
  c.near("std ag params", s.ag.total_params(), 124.68e3, kGateTol);
  c.near("std ag flops", s.ag.total_flops(), 61.68e6, kGateTol);
  const GateComparison t = compare_gate_costs(DecoderConfig::tiny(), 256, 256);
  c.near("tiny lgag params", t.lgag.total_params(), 5.51e3, kGateTol);
  c.near("tiny lgag flops", t.lgag.total_flops(), 5.24e6, kGateTol);
  c.near("tiny ag params", t.ag.total_params(), 31.62e3, kGateTol);
  c.near("tiny ag flops", t.ag.total_flops(), 15.91e6, kGateTol);
  return c;
}

void suite_check(Check &c, const SuiteResult &r, int min_instances) {
  for (const auto &p : r.properties) {
    if (!p.pass()) {
      c.require(p.name + " [" + p.counterexample + "]", false);
    }
  }
  c.require(std::to_string(r.properties.size()) + " properties, " +
                std::to_string(r.instances()) + " instances",
            r.pass());
  if (min_instances > 0) {
    const int first = r.properties.empty() ? 0 : r.properties.front().instances;
    c.require("oracle instances " + std::to_string(first) + " >= " +
                  std::to_string(min_instances),
              first >= min_instances);
  }
}

Check a5() {
  Check c;
  const auto t0 = Clock::now();
  const VerifyOptions opts;
  suite_check(c, verify_kernels(opts), kA5MinInstances);
  c.within("runtime", seconds_since(t0), kA5Seconds);
  return c;
}

Check a6() {
  Check c;
  suite_check(c, verify_blocks(VerifyOptions{}), kA6MinInstances);
  return c;
}

Check a7() {
  Check c;
  suite_check(c, verify_loss(VerifyOptions{}), 0);
  return c;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_forward(const fs::path &out) {
  const std::string cmd = "EMCAD_THREADS=1 \"" EMCAD_CLI_PATH "\" forward \"" +
                          std::string(EMCAD_SOURCE_DIR) +
                          "/configs/standard.json\" --seed 2024 --out \"" +
                          out.string() + "\" >/dev/null";
  return std::system(cmd.c_str());
}

Check a8() {
  Check c;
  const fs::path root = fs::temp_directory_path() / "emcad_acceptance_a8";
  fs::remove_all(root);
  const auto t0 = Clock::now();
  const int rc1 = run_forward(root / "run1");
  const double first = seconds_since(t0);
  const int rc2 = run_forward(root / "run2");
  c.require("both forwards exit 0", rc1 == 0 && rc2 == 0);
  bool identical = rc1 == 0 && rc2 == 0;
  int files = 0;
  for (const char *f : {"p1.emct", "p2.emct", "p3.emct", "p4.emct", "aggregate.emct"}) {
    const std::string a = slurp(root / "run1" / f), b = slurp(root / "run2" / f);
    identical = identical && !a.empty() && a == b;
    ++files;
  }
  c.require(std::to_string(files) + " files byte-identical", identical);
  c.within("standard@224 batch 1, 1 thread", first, kA8Seconds);
  fs::remove_all(root);
  return c;
}

} // namespace

int main() {
  const std::vector<std::pair<const char *, std::function<Check()>>> criteria = {
      {"A1 parameter totals", a1}, {"A2 FLOP totals", a2},
      {"A3 ablation ladder", a3},  {"A4 gate calibration", a4},
      {"A5 kernel oracle suite", a5}, {"A6 block property suite", a6},
      {"A7 loss suite", a7},       {"A8 end-to-end determinism", a8}};
  int failed = 0;
  for (const auto &[name, fn] : criteria) {
    Check c;
    try {
      c = fn();
    } catch (const std::exception &e) {
      c.require(std::string("exception: ") + e.what(), false);
    }
    std::printf("%.2s %s  %s: %s\n", name, c.ok ? "PASS" : "FAIL", name + 3,
                c.detail.c_str());
    failed += c.ok ? 0 : 1;
  }
  std::printf("%d/%zu criteria pass\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
