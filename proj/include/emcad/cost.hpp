#pragma once

#include "emcad/config.hpp"
#include "emcad/decoder.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace emcad {

/// How FLOPs are tallied.
///  Macs: convolution multiply-accumulates only (1 MAC = 1 FLOP).
///  Full: layer-level profiler convention. Convolutions add one op per output
///        element for a bias; batch norm costs 2 per element; ReLU/ReLU6 1 per
///        output element; upsampling 1 per output element; adaptive pooling
///        1 per input element. Sigmoid, gating products, fusion additions,
///        channel pooling and shuffles stay free.
enum class FlopConvention { Macs, Full };

std::string to_string(FlopConvention c);

/// One block in the cost tree. Totals of an inner node are the sums of its
/// children; leaves are individual layers.
struct CostNode {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  bool head = false; // segmentation head (excluded from body totals)
  std::vector<CostNode> children;

  [[nodiscard]] bool is_leaf() const noexcept { return children.empty(); }
};

inline CostNode named_node(std::string name) {
  CostNode n;
  n.name = std::move(name);
  return n;
}

struct CostReport {
  CostNode root = named_node("decoder");
  int input_h = 0;
  int input_w = 0;
  FlopConvention convention = FlopConvention::Macs;

  [[nodiscard]] std::uint64_t total_params() const noexcept {
    return root.params;
  }
  [[nodiscard]] std::uint64_t total_flops() const noexcept {
    return root.flops;
  }
  // Decoder body: everything except the segmentation heads.
  [[nodiscard]] std::uint64_t body_params() const;
  [[nodiscard]] std::uint64_t body_flops() const;
  // Dotted path below the root, e.g. "stage3.gate.gc_g". nullptr if absent.
  [[nodiscard]] const CostNode *find(const std::string &path) const;
};

CostReport count_params(const Decoder &dec);
CostReport count_flops(const Decoder &dec, int input_h, int input_w,
                       FlopConvention convention = FlopConvention::Macs);

/// Parameters and FLOPs for the three gates of a decoder, once with the
/// large-kernel grouped gate and once with the 1x1 baseline gate.
struct GateComparison {
  CostReport lgag;
  CostReport ag;
};
GateComparison compare_gate_costs(const DecoderConfig &cfg, int input_h,
                                  int input_w,
                                  FlopConvention convention =
                                      FlopConvention::Full);

/// Result of the discrete search that fixes the gate defaults.
struct GateCalibration {
  int intermediate_divisor = 0; // F_int = C / divisor
  int channels_per_group = 0;   // groups = C / channels_per_group
  std::uint64_t params = 0;     // three-gate total at the chosen point
};
// Minimizes |three-gate params - target| over F_int in {C/4, C/2, C} and every
// channels-per-group value that yields a valid grouping on all three gates.
GateCalibration calibrate_gate_defaults(const std::array<int, 4> &channels,
                                        std::uint64_t target_params);

enum class TableFormat { Text, Csv };
std::string render_table(const CostReport &report, TableFormat format);

// "1.91M", "0.381G", "11.01K"
std::string format_si(double value, int decimals);
// Fixed unit 'K', 'M' or 'G': format_scaled(3.81e8, 'G', 3) == "0.381G".
std::string format_scaled(double value, char unit, int decimals);

/// One row of an expectation table: key is "params", "flops" (body totals),
/// "total_params", "total_flops", or "<node path>/params|flops".
struct Expectation {
  std::string key;
  double expected = 0;
  double rel_tol = 0;
};
struct ExpectationResult {
  Expectation expectation;
  double actual = 0;
  bool found = false;
  [[nodiscard]] bool pass() const;
};
std::vector<Expectation> parse_expectations(const std::string &csv_text);
std::vector<ExpectationResult>
check_expectations(const CostReport &report,
                   const std::vector<Expectation> &expectations);

} // namespace emcad
