#include "emcad/cost.hpp"
#include "emcad/errors.hpp"
#include "emcad/verify.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace emcad;

namespace {

// Stage 1 expands 4 -> 8 channels and runs a single 3x3 depth-wise branch.
DecoderConfig small_config() {
  DecoderConfig cfg;
  cfg.channels = {4, 8, 16, 32};
  cfg.kernel_set = {3};
  cfg.num_classes = 1;
  return cfg;
}

std::uint64_t conv_macs(std::uint64_t cin, std::uint64_t cout,
                        std::uint64_t groups, std::uint64_t k,
                        std::uint64_t pixels) {
  return cin / groups * cout * k * k * pixels;
}

std::string read_file(const std::string &path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

TEST_CASE("single layer counts") {
  const Decoder dec = build_decoder(small_config(), 1);
  const CostReport params = count_params(dec);
  const CostReport macs = count_flops(dec, 32, 32);

  const CostNode *dw = params.find("stage1.mscam.mscb.dwcb0.conv");
  REQUIRE(dw != nullptr);
  CHECK(dw->params == 72); // 8 channels x 3 x 3, no bias
  CHECK(macs.find("stage1.mscam.mscb.dwcb0.conv")->flops ==
        conv_macs(8, 8, 8, 3, 64));

  const CostNode *pw = params.find("stage1.mscam.mscb.pwc1");
  REQUIRE(pw != nullptr);
  CHECK(pw->params == 32);
  CHECK(macs.find("stage1.mscam.mscb.pwc1")->flops == 2048); // 4*8*8*8
  CHECK(conv_macs(4, 8, 1, 1, 100) == 3200);

  CHECK(params.find("stage1.mscam.mscb.bn1")->params == 16);
  CHECK(params.find("stage9") == nullptr);
}

TEST_CASE("full convention adds elementwise work") {
  const Decoder dec = build_decoder(small_config(), 1);
  const CostReport macs = count_flops(dec, 32, 32);
  const CostReport full = count_flops(dec, 32, 32, FlopConvention::Full);
  CHECK(full.find("stage1.mscam.mscb.bn1")->flops == 2 * 8 * 64);
  CHECK(macs.find("stage1.mscam.mscb.bn1")->flops == 0);
  CHECK(full.find("stage1.mscam.mscb.relu6")->flops == 8 * 64);
  CHECK(full.find("stage1.head")->flops == macs.find("stage1.head")->flops + 64);
  CHECK(full.find("stage1.eucb.upsample")->flops == 8 * 64);
  CHECK(full.find("stage1.mscam.cab.pool_avg")->flops == 4 * 64);
  CHECK(full.body_flops() > macs.body_flops());
  CHECK(full.body_params() == macs.body_params());
}

TEST_CASE("body totals exclude the heads") {
  const CostReport r = count_params(build_decoder(DecoderConfig::standard(), 2));
  std::uint64_t heads = 0;
  for (const auto &stage : r.root.children)
    for (const auto &c : stage.children)
      if (c.head)
        heads += c.params;
  CHECK(heads == (64 + 128 + 320 + 512) * 1 + 4); // one class, with bias
  CHECK(r.total_params() - r.body_params() == heads);
}

TEST_CASE("table values for the presets") {
  const auto std_cfg = DecoderConfig::standard();
  const auto tiny_cfg = DecoderConfig::tiny();
  const CostReport s224 = count_flops(build_decoder(std_cfg, 1), 224, 224);
  CHECK(s224.body_params() == doctest::Approx(1.91e6).epsilon(0.02));
  CHECK(s224.body_flops() == doctest::Approx(0.381e9).epsilon(0.10));
  CHECK(count_flops(build_decoder(std_cfg, 1), 256, 256).body_flops() ==
        doctest::Approx(0.498e9).epsilon(0.10));
  const CostReport t224 = count_flops(build_decoder(tiny_cfg, 1), 224, 224);
  CHECK(t224.body_params() == doctest::Approx(0.507e6).epsilon(0.02));
  CHECK(t224.body_flops() == doctest::Approx(0.110e9).epsilon(0.10));
}

TEST_CASE("gate comparison at 256x256") {
  const GateComparison s = compare_gate_costs(DecoderConfig::standard(), 256, 256);
  CHECK(s.lgag.total_params() == doctest::Approx(0.011e6).epsilon(0.05));
  CHECK(s.lgag.total_flops() == doctest::Approx(0.011e9).epsilon(0.05));
  CHECK(s.ag.total_params() == doctest::Approx(0.125e6).epsilon(0.05));
  CHECK(s.ag.total_flops() == doctest::Approx(0.062e9).epsilon(0.05));
  const GateComparison t = compare_gate_costs(DecoderConfig::tiny(), 256, 256);
  CHECK(t.lgag.total_params() == doctest::Approx(0.0055e6).epsilon(0.05));
  CHECK(t.ag.total_params() == doctest::Approx(0.0316e6).epsilon(0.05));
}

TEST_CASE("calibrated gate defaults reproduce the config") {
  const GateCalibration c = calibrate_gate_defaults({64, 128, 320, 512}, 11000);
  const DecoderConfig d = DecoderConfig::standard();
  CHECK(c.intermediate_divisor == d.lgag_intermediate_divisor);
  CHECK(c.channels_per_group == d.lgag_channels_per_group);
  CHECK(c.params == 11017);
}

TEST_CASE("table rendering") {
  CostReport empty;
  CHECK(render_table(empty, TableFormat::Csv) == "block,params,flops\n");
  const std::string text = render_table(empty, TableFormat::Text);
  CHECK(text.find('\n') == text.size() - 1);

  DecoderConfig nine = DecoderConfig::standard();
  nine.num_classes = 9; // matches configs/standard.json
  const CostReport r = count_flops(build_decoder(nine, 7), 224, 224);
  CHECK(render_table(r, TableFormat::Text) ==
        read_file(EMCAD_SOURCE_DIR "/tests/golden/standard_224.txt"));

  // Every CSV row parses back and the leaf sums agree with the totals.
  std::istringstream csv(render_table(r, TableFormat::Csv));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "block,params,flops");
  std::uint64_t leaf_params = 0, body_flops = 0;
  while (std::getline(csv, line)) {
    std::istringstream ls(line);
    std::string name, p, f;
    REQUIRE(std::getline(ls, name, ','));
    REQUIRE(std::getline(ls, p, ','));
    REQUIRE(std::getline(ls, f, ','));
    if (name == "body")
      body_flops = std::stoull(f);
    else if (name.starts_with("stage") && name.find('.') == std::string::npos)
      leaf_params += std::stoull(p);
  }
  CHECK(leaf_params == r.total_params());
  CHECK(body_flops == r.body_flops());
}

TEST_CASE("si formatting") {
  CHECK(format_si(1.9138e6, 2) == "1.91M");
  CHECK(format_si(11017, 2) == "11.02K");
  CHECK(format_scaled(3.81e8, 'G', 3) == "0.381G");
  CHECK_THROWS_AS(format_scaled(1, 'T', 1), ConfigError);
}

TEST_CASE("expectation tables") {
  const auto rows = parse_expectations("key,expected,rel_tol\n"
                                       "# comment\n"
                                       "params, 1910000, 0.02\n"
                                       "stage4.gate/params,1,0\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].rel_tol == 0.02);
  CHECK_THROWS_AS(parse_expectations("params,1\n"), FormatError);
  CHECK_THROWS_AS(parse_expectations("params,x,0.1\n"), FormatError);

  const CostReport r = count_params(build_decoder(DecoderConfig::standard(), 1));
  const auto results = check_expectations(r, rows);
  CHECK(results[0].pass());
  CHECK_FALSE(results[1].found); // stage4 has no gate
  CHECK_FALSE(results[1].pass());
}

TEST_CASE("cost property suite") {
  const SuiteResult r = verify_cost(VerifyOptions{});
  for (const auto &p : r.properties) {
    INFO(p.name << ": " << p.counterexample);
    CHECK(p.pass());
  }
}
