#pragma once

#include "emcad/blocks.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace emcad {

enum class GateKind { Lgag, Ag };

/// Everything that determines the decoder's architecture and cost.
/// Stage widths are listed shallow to deep: channels[0] pairs with the
/// 1/4-scale feature, channels[3] with the 1/32-scale one.
struct DecoderConfig {
  std::array<int, 4> channels{64, 128, 320, 512};
  std::vector<int> kernel_set{1, 3, 5};
  MsdcArrangement msdc_arrangement = MsdcArrangement::Parallel;
  int expansion_factor = 2;
  // Gate intermediate width is C / lgag_intermediate_divisor; gate
  // projections use C / lgag_channels_per_group groups. The defaults
  // (2, 2) come from calibrate_gate_defaults() in cost.hpp.
  int lgag_intermediate_divisor = 2;
  int lgag_channels_per_group = 2;
  GateKind gate = GateKind::Lgag;
  int cab_ratio = 16;
  int sab_kernel = 7;
  int shuffle_groups = 0; // 0 = default_shuffle_groups()
  int num_classes = 1;
  bool use_lgag = true;
  bool use_mscam = true;
  bool cascaded = true;
  UpsampleMode upsample_mode = UpsampleMode::Nearest;

  static DecoderConfig standard();
  static DecoderConfig tiny();

  // Throws ConfigError naming the offending field.
  void validate() const;

  [[nodiscard]] int gate_intermediate(int channels_at_stage) const {
    return channels_at_stage / lgag_intermediate_divisor;
  }
  [[nodiscard]] int gate_groups(int channels_at_stage) const {
    return channels_at_stage / lgag_channels_per_group;
  }
};

struct RunSettings {
  std::uint64_t seed = 0;
  int input_h = 224;
  int input_w = 224;
  int batch = 1;
};

struct ConfigFile {
  DecoderConfig decoder;
  RunSettings run;
};

// Structured JSON config. Unknown keys are rejected (ConfigError); malformed
// JSON raises FormatError.
ConfigFile parse_config(const std::string &text);
ConfigFile load_config(const std::filesystem::path &path);
std::string dump_config(const ConfigFile &cfg);

std::string to_string(MsdcArrangement a);
std::string to_string(UpsampleMode m);
std::string to_string(GateKind g);

} // namespace emcad
