#include "emcad/tensor_io.hpp"

#include "emcad/errors.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace emcad {

namespace {

constexpr std::uint16_t kBundleVersion = 1;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

void put_u16(std::ostream &out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream &out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF),
                     static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF),
                     static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

void get_bytes(std::istream &in, char *dst, std::size_t n, const char *what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw FormatError(std::string("truncated ") + what);
}

std::uint16_t get_u16(std::istream &in, const char *what) {
  unsigned char b[2];
  get_bytes(in, reinterpret_cast<char *>(b), 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream &in, const char *what) {
  unsigned char b[4];
  get_bytes(in, reinterpret_cast<char *>(b), 4, what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::vector<std::uint32_t> dims4(const Shape &s) {
  return {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
          static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
}

std::ofstream open_out(const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw FormatError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError("cannot open " + path.string());
  return in;
}

} // namespace

void write_tensor(std::ostream &out, std::span<const std::uint32_t> dims,
                  std::span<const float> values) {
  if (dims.empty() || dims.size() > 4)
    throw FormatError("tensor rank must be 1..4");
  std::uint64_t count = 1;
  for (auto d : dims)
    count *= d;
  if (count != values.size())
    throw FormatError("tensor payload does not match dims");
  out.write(kTensorMagic, 4);
  put_u16(out, kTensorVersion);
  put_u16(out, static_cast<std::uint16_t>(dims.size()));
  for (auto d : dims)
    put_u32(out, d);
  for (float v : values)
    put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out)
    throw FormatError("tensor write failed");
}

RawTensor read_raw_tensor(std::istream &in) {
  char magic[4];
  get_bytes(in, magic, 4, "tensor header");
  if (std::memcmp(magic, kTensorMagic, 4) != 0)
    throw FormatError("bad tensor magic");
  const auto version = get_u16(in, "tensor header");
  if (version != kTensorVersion)
    throw FormatError("unsupported tensor version " + std::to_string(version));
  const auto rank = get_u16(in, "tensor header");
  if (rank < 1 || rank > 4)
    throw FormatError("tensor rank " + std::to_string(rank) +
                      " outside 1..4");
  RawTensor t;
  std::uint64_t count = 1;
  for (int i = 0; i < rank; ++i) {
    t.dims.push_back(get_u32(in, "tensor dims"));
    count *= t.dims.back();
    if (count > kMaxElements)
      throw FormatError("tensor too large");
  }
  std::vector<char> raw(count * 4);
  get_bytes(in, raw.data(), raw.size(), "tensor payload");
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto *b = reinterpret_cast<const unsigned char *>(&raw[4 * i]);
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                               (static_cast<std::uint32_t>(b[1]) << 8) |
                               (static_cast<std::uint32_t>(b[2]) << 16) |
                               (static_cast<std::uint32_t>(b[3]) << 24);
    t.values[i] = std::bit_cast<float>(bits);
  }
  return t;
}

void write_tensor(std::ostream &out, const Tensor4D &t) {
  const auto d = dims4(t.shape());
  write_tensor(out, d, t.values());
}

Tensor4D read_tensor(std::istream &in) {
  RawTensor raw = read_raw_tensor(in);
  std::array<int, 4> d{1, 1, 1, 1};
  const std::size_t pad = 4 - raw.dims.size();
  for (std::size_t i = 0; i < raw.dims.size(); ++i) {
    if (raw.dims[i] == 0 || raw.dims[i] > 0x7FFFFFFFu)
      throw FormatError("tensor dims must be positive");
    d[pad + i] = static_cast<int>(raw.dims[i]);
  }
  return Tensor4D(Shape{d[0], d[1], d[2], d[3]}, std::move(raw.values));
}

void save_tensor(const std::filesystem::path &path, const Tensor4D &t) {
  auto out = open_out(path);
  write_tensor(out, t);
}

Tensor4D load_tensor(const std::filesystem::path &path) {
  auto in = open_in(path);
  try {
    return read_tensor(in);
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::size_t WeightBundle::parameter_scalars() const {
  std::size_t n = 0;
  for (const auto &e : entries)
    if (e.kind == TensorKind::Parameter)
      n += e.tensor.values.size();
  return n;
}

WeightBundle bundle_from(const Decoder &dec) {
  WeightBundle b;
  for (const auto &ref : tensor_refs(dec))
    b.entries.push_back(
        {ref.name, ref.kind,
         RawTensor{ref.dims, {ref.values.begin(), ref.values.end()}}});
  return b;
}

void load_into(Decoder &dec, const WeightBundle &bundle) {
  auto refs = tensor_refs(dec);
  if (refs.size() != bundle.entries.size())
    throw FormatError("bundle has " + std::to_string(bundle.entries.size()) +
                      " tensors, decoder expects " +
                      std::to_string(refs.size()));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto &e = bundle.entries[i];
    if (e.name != refs[i].name || e.tensor.dims != refs[i].dims ||
        e.kind != refs[i].kind)
      throw FormatError("bundle entry " + std::to_string(i) + " '" + e.name +
                        "' does not match decoder tensor '" + refs[i].name +
                        "'");
    std::copy(e.tensor.values.begin(), e.tensor.values.end(),
              refs[i].values.begin());
  }
}

void write_bundle(std::ostream &out, const WeightBundle &bundle) {
  nlohmann::json manifest;
  manifest["entries"] = nlohmann::json::array();
  for (const auto &e : bundle.entries)
    manifest["entries"].push_back(
        {{"name", e.name},
         {"kind", e.kind == TensorKind::Parameter ? "param" : "buffer"},
         {"shape", e.tensor.dims}});
  const std::string text = manifest.dump();
  out.write(kBundleMagic, 4);
  put_u16(out, kBundleVersion);
  put_u16(out, 0);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto &e : bundle.entries)
    write_tensor(out, e.tensor.dims, e.tensor.values);
  if (!out)
    throw FormatError("bundle write failed");
}

WeightBundle read_bundle(std::istream &in) {
  char magic[4];
  get_bytes(in, magic, 4, "bundle header");
  if (std::memcmp(magic, kBundleMagic, 4) != 0)
    throw FormatError("bad bundle magic");
  if (get_u16(in, "bundle header") != kBundleVersion)
    throw FormatError("unsupported bundle version");
  get_u16(in, "bundle header");
  const auto len = get_u32(in, "bundle header");
  std::string text(len, '\0');
  get_bytes(in, text.data(), len, "bundle manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("bundle manifest: ") + e.what());
  }
  WeightBundle b;
  try {
    for (const auto &m : manifest.at("entries")) {
      BundleEntry e;
      e.name = m.at("name").get<std::string>();
      const auto kind = m.at("kind").get<std::string>();
      if (kind != "param" && kind != "buffer")
        throw FormatError("bundle entry kind '" + kind + "'");
      e.kind = kind == "param" ? TensorKind::Parameter : TensorKind::Buffer;
      e.tensor = read_raw_tensor(in);
      if (e.tensor.dims != m.at("shape").get<std::vector<std::uint32_t>>())
        throw FormatError("bundle entry '" + e.name +
                          "' shape disagrees with manifest");
      b.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("bundle manifest: ") + e.what());
  }
  return b;
}

void save_bundle(const std::filesystem::path &path, const WeightBundle &b) {
  auto out = open_out(path);
  write_bundle(out, b);
}

WeightBundle load_bundle(const std::filesystem::path &path) {
  auto in = open_in(path);
  return read_bundle(in);
}

void save_features(const std::filesystem::path &dir, const PyramidFeatures &f) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < 4; ++i)
    save_tensor(dir / ("x" + std::to_string(i + 1) + ".emct"), f.x[i]);
}

PyramidFeatures load_features(const std::filesystem::path &dir) {
  PyramidFeatures f;
  for (int i = 0; i < 4; ++i)
    f.x[i] = load_tensor(dir / ("x" + std::to_string(i + 1) + ".emct"));
  return f;
}

} // namespace emcad
