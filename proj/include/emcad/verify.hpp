#pragma once

// Randomized property suites shared by the CLI `verify` command, the unit
// tests and the acceptance runner.

#include "emcad/kernels.hpp"
#include "emcad/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace emcad {

enum class VerifySuite { Kernels, Blocks, Graph, Cost, Loss, All };

std::optional<VerifySuite> parse_suite(std::string_view name);
std::string to_string(VerifySuite s);

using ConvImpl = std::function<Tensor4D(const Tensor4D &, const ConvParams &)>;

// Max abs difference allowed between an optimized path and its oracle.
inline constexpr double kOracleTolerance = 1e-5;

struct VerifyOptions {
  std::uint64_t seed = 0x5EED2024;
  int kernel_instances = 240; // per kernel property
  int block_instances = 120;  // per block property
  int loss_instances = 40;
  // Convolution under test in the kernel suite; empty means conv2d.
  ConvImpl conv;
};

struct PropertyResult {
  std::string name;
  int instances = 0;
  int failures = 0;
  std::string counterexample; // first failure only
  [[nodiscard]] bool pass() const noexcept {
    return instances > 0 && failures == 0;
  }
};

struct SuiteResult {
  std::string suite;
  std::vector<PropertyResult> properties;

  [[nodiscard]] bool pass() const noexcept;
  [[nodiscard]] int instances() const noexcept;
  [[nodiscard]] const PropertyResult *first_failure() const noexcept;
};

SuiteResult verify_kernels(const VerifyOptions &opts);
SuiteResult verify_blocks(const VerifyOptions &opts);
SuiteResult verify_graph(const VerifyOptions &opts);
SuiteResult verify_cost(const VerifyOptions &opts);
SuiteResult verify_loss(const VerifyOptions &opts);
std::vector<SuiteResult> run_verify(VerifySuite suite,
                                    const VerifyOptions &opts);

// conv2d with the padding dropped by one on each side: a planted bug for
// checking that the kernel suite detects faults.
ConvImpl wrong_padding_conv();

// Random fills used by the suites.
Tensor4D random_tensor(Sampler &s, Shape shape, float lo = -1.0f,
                       float hi = 1.0f);
void randomize(ConvParams &p, Sampler &s, float scale = 0.5f);
void randomize(NormParams &p, Sampler &s);

} // namespace emcad
