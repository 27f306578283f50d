#include "emcad/config.hpp"

#include "emcad/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace emcad {

using nlohmann::json;

DecoderConfig DecoderConfig::standard() { return DecoderConfig{}; }

DecoderConfig DecoderConfig::tiny() {
  DecoderConfig cfg;
  cfg.channels = {32, 64, 160, 256};
  return cfg;
}

void DecoderConfig::validate() const {
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] < 1)
      throw ConfigError("channels[" + std::to_string(i) +
                        "] must be positive");
    if (i > 0 && channels[i] <= channels[i - 1])
      throw ConfigError("channels must strictly increase with depth");
  }
  if (kernel_set.empty())
    throw ConfigError("kernel_set must not be empty");
  for (int k : kernel_set)
    if (k < 1 || k % 2 == 0)
      throw ConfigError("kernel_set entries must be odd and positive, got " +
                        std::to_string(k));
  if (expansion_factor < 1)
    throw ConfigError("expansion_factor must be >= 1");
  if (num_classes < 1)
    throw ConfigError("num_classes must be >= 1");
  if (cab_ratio < 1)
    throw ConfigError("cab_ratio must be >= 1");
  if (sab_kernel < 1 || sab_kernel % 2 == 0)
    throw ConfigError("sab_kernel must be odd and positive");
  if (shuffle_groups < 0)
    throw ConfigError("shuffle_groups must be >= 0");
  if (shuffle_groups > 0)
    for (int c : channels)
      if ((c * expansion_factor) % shuffle_groups != 0)
        throw ConfigError("shuffle_groups must divide every expanded width");
  if (use_lgag && !cascaded)
    throw ConfigError("use_lgag requires cascaded=true (gates fuse the "
                      "upsampled path with the skip feature)");
  if (lgag_intermediate_divisor < 1 || lgag_channels_per_group < 1)
    throw ConfigError("lgag divisors must be >= 1");
  // Gates sit on the three shallower stages.
  for (std::size_t i = 0; i + 1 < channels.size(); ++i) {
    const int c = channels[i];
    if (c % lgag_intermediate_divisor != 0)
      throw ConfigError("lgag_intermediate_divisor must divide stage width " +
                        std::to_string(c));
    const int f_int = gate_intermediate(c);
    if (gate == GateKind::Lgag) {
      if (c % lgag_channels_per_group != 0)
        throw ConfigError("lgag_channels_per_group must divide stage width " +
                          std::to_string(c));
      if (f_int % gate_groups(c) != 0)
        throw ConfigError("lgag group count " +
                          std::to_string(gate_groups(c)) +
                          " must divide intermediate width " +
                          std::to_string(f_int));
    }
  }
}

std::string to_string(MsdcArrangement a) {
  return a == MsdcArrangement::Parallel ? "parallel" : "sequential";
}
std::string to_string(UpsampleMode m) {
  return m == UpsampleMode::Nearest ? "nearest" : "bilinear";
}
std::string to_string(GateKind g) { return g == GateKind::Lgag ? "lgag" : "ag"; }

namespace {

template <typename T> T get_as(const json &j, const std::string &key) {
  try {
    return j.get<T>();
  } catch (const json::exception &e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::string get_choice(const json &j, const std::string &key,
                       const std::set<std::string> &allowed) {
  auto v = get_as<std::string>(j, key);
  if (!allowed.contains(v))
    throw ConfigError("config key '" + key + "': unsupported value '" + v +
                      "'");
  return v;
}

} // namespace

ConfigFile parse_config(const std::string &text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error &e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object())
    throw FormatError("config root must be a JSON object");

  ConfigFile cfg;
  DecoderConfig &d = cfg.decoder;
  // A preset, when given, seeds the widths before other keys apply.
  if (auto it = root.find("preset"); it != root.end()) {
    const auto name = get_choice(*it, "preset", {"standard", "tiny"});
    d = name == "tiny" ? DecoderConfig::tiny() : DecoderConfig::standard();
  }

  for (const auto &[key, value] : root.items()) {
    if (key == "preset") {
      continue;
    } else if (key == "channels") {
      auto v = get_as<std::vector<int>>(value, key);
      if (v.size() != 4)
        throw ConfigError("channels must list exactly four stage widths");
      std::copy(v.begin(), v.end(), d.channels.begin());
    } else if (key == "kernel_set") {
      d.kernel_set = get_as<std::vector<int>>(value, key);
    } else if (key == "msdc_arrangement") {
      d.msdc_arrangement =
          get_choice(value, key, {"parallel", "sequential"}) == "parallel"
              ? MsdcArrangement::Parallel
              : MsdcArrangement::Sequential;
    } else if (key == "expansion_factor") {
      d.expansion_factor = get_as<int>(value, key);
    } else if (key == "lgag_intermediate_divisor") {
      d.lgag_intermediate_divisor = get_as<int>(value, key);
    } else if (key == "lgag_channels_per_group") {
      d.lgag_channels_per_group = get_as<int>(value, key);
    } else if (key == "gate") {
      d.gate = get_choice(value, key, {"lgag", "ag"}) == "lgag" ? GateKind::Lgag
                                                               : GateKind::Ag;
    } else if (key == "cab_ratio") {
      d.cab_ratio = get_as<int>(value, key);
    } else if (key == "sab_kernel") {
      d.sab_kernel = get_as<int>(value, key);
    } else if (key == "shuffle_groups") {
      d.shuffle_groups = get_as<int>(value, key);
    } else if (key == "num_classes") {
      d.num_classes = get_as<int>(value, key);
    } else if (key == "use_lgag") {
      d.use_lgag = get_as<bool>(value, key);
    } else if (key == "use_mscam") {
      d.use_mscam = get_as<bool>(value, key);
    } else if (key == "cascaded") {
      d.cascaded = get_as<bool>(value, key);
    } else if (key == "upsample_mode") {
      d.upsample_mode =
          get_choice(value, key, {"nearest", "bilinear"}) == "nearest"
              ? UpsampleMode::Nearest
              : UpsampleMode::Bilinear;
    } else if (key == "seed") {
      cfg.run.seed = get_as<std::uint64_t>(value, key);
    } else if (key == "input_size") {
      auto v = get_as<std::vector<int>>(value, key);
      if (v.size() != 2)
        throw ConfigError("input_size must be [height, width]");
      cfg.run.input_h = v[0];
      cfg.run.input_w = v[1];
    } else if (key == "batch") {
      cfg.run.batch = get_as<int>(value, key);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  d.validate();
  if (cfg.run.batch < 1)
    throw ConfigError("batch must be >= 1");
  if (cfg.run.input_h < 32 || cfg.run.input_w < 32 ||
      cfg.run.input_h % 32 != 0 || cfg.run.input_w % 32 != 0)
    throw ConfigError("input_size must be positive multiples of 32");
  return cfg;
}

ConfigFile load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const ConfigFile &cfg) {
  const DecoderConfig &d = cfg.decoder;
  json j = {
      {"channels", d.channels},
      {"kernel_set", d.kernel_set},
      {"msdc_arrangement", to_string(d.msdc_arrangement)},
      {"expansion_factor", d.expansion_factor},
      {"lgag_intermediate_divisor", d.lgag_intermediate_divisor},
      {"lgag_channels_per_group", d.lgag_channels_per_group},
      {"gate", to_string(d.gate)},
      {"cab_ratio", d.cab_ratio},
      {"sab_kernel", d.sab_kernel},
      {"shuffle_groups", d.shuffle_groups},
      {"num_classes", d.num_classes},
      {"use_lgag", d.use_lgag},
      {"use_mscam", d.use_mscam},
      {"cascaded", d.cascaded},
      {"upsample_mode", to_string(d.upsample_mode)},
      {"seed", cfg.run.seed},
      {"input_size", {cfg.run.input_h, cfg.run.input_w}},
      {"batch", cfg.run.batch},
  };
  return j.dump(2) + "\n";
}

} // namespace emcad
