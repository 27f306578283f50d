#pragma once

#include "emcad/decoder.hpp"
#include "emcad/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace emcad {

/// Tensor file layout (all little-endian):
///   "EMCT" | u16 version | u16 rank | rank x u32 dims | prod(dims) x f32
/// rank is 1..4; payload is row-major.
inline constexpr char kTensorMagic[4] = {'E', 'M', 'C', 'T'};
inline constexpr std::uint16_t kTensorVersion = 1;

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

void write_tensor(std::ostream &out, std::span<const std::uint32_t> dims,
                  std::span<const float> values);
RawTensor read_raw_tensor(std::istream &in);

void write_tensor(std::ostream &out, const Tensor4D &t);
// Ranks below 4 are left-padded with unit dims.
Tensor4D read_tensor(std::istream &in);

void save_tensor(const std::filesystem::path &path, const Tensor4D &t);
Tensor4D load_tensor(const std::filesystem::path &path);

/// Weight bundle layout (little-endian):
///   "EMCW" | u16 version | u16 reserved | u32 manifest bytes | manifest JSON
///   | one tensor record per manifest entry, in manifest order.
/// The manifest is {"entries": [{"name", "kind": "param"|"buffer",
/// "shape": [...]}, ...]} in canonical build order.
inline constexpr char kBundleMagic[4] = {'E', 'M', 'C', 'W'};

struct BundleEntry {
  std::string name;
  TensorKind kind = TensorKind::Parameter;
  RawTensor tensor;
};

struct WeightBundle {
  std::vector<BundleEntry> entries;

  [[nodiscard]] std::size_t parameter_scalars() const;
};

WeightBundle bundle_from(const Decoder &dec);
// Copies bundle values into a decoder built with the same config. Names,
// order and shapes must match exactly.
void load_into(Decoder &dec, const WeightBundle &bundle);

void write_bundle(std::ostream &out, const WeightBundle &bundle);
WeightBundle read_bundle(std::istream &in);
void save_bundle(const std::filesystem::path &path, const WeightBundle &b);
WeightBundle load_bundle(const std::filesystem::path &path);

// Feature directories hold x1.emct .. x4.emct.
void save_features(const std::filesystem::path &dir, const PyramidFeatures &f);
PyramidFeatures load_features(const std::filesystem::path &dir);

} // namespace emcad
