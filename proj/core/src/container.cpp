#include "latent_shield/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lshield {

namespace {

constexpr char kMagic[4] = {'L', 'S', 'E', '1'};
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxLayers = 64;

// Largest element count accepted from a file; guards against allocating
// from a corrupt header.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 28;

}  // namespace

BinaryWriter::BinaryWriter(SectionTag section) {
  buf_.insert(buf_.end(), std::begin(kMagic), std::end(kMagic));
  u32(static_cast<std::uint32_t>(section));
}

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::string(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void BinaryWriter::tensor(const Tensor& t) {
  u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) u32(static_cast<std::uint32_t>(d));
  for (double v : t.data()) f64(v);
}

void BinaryWriter::conv(const ConvLayer& layer) {
  u32(static_cast<std::uint32_t>(layer.spec.in_channels));
  u32(static_cast<std::uint32_t>(layer.spec.out_channels));
  u32(static_cast<std::uint32_t>(layer.spec.kernel));
  u32(static_cast<std::uint32_t>(layer.spec.stride));
  u32(static_cast<std::uint32_t>(layer.spec.padding));
  tensor(layer.weight);
  tensor(layer.bias);
}

void BinaryWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

BinaryReader::BinaryReader(std::vector<std::uint8_t> bytes, SectionTag expected)
    : buf_(std::move(bytes)) {
  if (buf_.size() < 8 || std::memcmp(buf_.data(), kMagic, 4) != 0) {
    throw FormatError("not an LSE1 container (bad magic)");
  }
  pos_ = 4;
  const std::uint32_t tag = u32();
  if (tag != static_cast<std::uint32_t>(expected)) {
    throw FormatError("LSE1 section tag " + std::to_string(tag) + " where " +
                      std::to_string(static_cast<std::uint32_t>(expected)) + " was expected");
  }
}

BinaryReader BinaryReader::open(const std::filesystem::path& path, SectionTag expected) {
  try {
    return BinaryReader(read_file_bytes(path), expected);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void BinaryReader::need(std::size_t n) const {
  if (buf_.size() - pos_ < n) throw FormatError("LSE1 container truncated");
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::string() {
  const std::uint32_t n = u32();
  need(n);
  std::string s(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return s;
}

Tensor BinaryReader::tensor() {
  const std::uint32_t rank = u32();
  if (rank == 0 || rank > kMaxRank) throw FormatError("LSE1 tensor rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    d = u32();
    if (d == 0) throw FormatError("LSE1 tensor with zero dimension");
    count *= d;
    if (count > kMaxElements) throw FormatError("LSE1 tensor too large");
  }
  need(count * 8);
  std::vector<double> data(count);
  for (double& v : data) v = f64();
  return Tensor(std::move(shape), std::move(data));
}

ConvLayer BinaryReader::conv() {
  ConvLayer layer;
  layer.spec.in_channels = u32();
  layer.spec.out_channels = u32();
  layer.spec.kernel = u32();
  layer.spec.stride = u32();
  layer.spec.padding = u32();
  layer.weight = tensor();
  layer.bias = tensor();
  try {
    layer.validate();
  } catch (const ShapeError& e) {
    throw FormatError(std::string("LSE1 layer inconsistent: ") + e.what());
  }
  return layer;
}

void BinaryReader::expect_end() const {
  if (!at_end()) throw FormatError("LSE1 container has trailing bytes");
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> serialize_encoder(const EncoderParams& params) {
  BinaryWriter w(SectionTag::encoder);
  w.u32(static_cast<std::uint32_t>(params.preset));
  w.u64(params.seed);
  w.string(params.version_tag);
  w.u32(static_cast<std::uint32_t>(params.body.size() + 2));
  for (const ConvLayer& l : params.body) w.conv(l);
  w.conv(params.head_mu);
  w.conv(params.head_logvar);
  return w.bytes();
}

void save_encoder(const EncoderParams& params, const std::filesystem::path& path) {
  const auto bytes = serialize_encoder(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

EncoderParams deserialize_encoder(std::vector<std::uint8_t> bytes) {
  BinaryReader r(std::move(bytes), SectionTag::encoder);
  EncoderParams p;
  const std::uint32_t preset = r.u32();
  if (preset < 1 || preset > 3) throw FormatError("unknown encoder preset id " + std::to_string(preset));
  p.preset = static_cast<EncoderPreset>(preset);
  p.seed = r.u64();
  p.version_tag = r.string();
  const std::uint32_t layers = r.u32();
  if (layers < 2 || layers > kMaxLayers) throw FormatError("bad encoder layer count " + std::to_string(layers));
  for (std::uint32_t i = 0; i + 2 < layers; ++i) p.body.push_back(r.conv());
  p.head_mu = r.conv();
  p.head_logvar = r.conv();
  r.expect_end();
  try {
    p.validate();
    if (p.preset != EncoderPreset::debug_linear) {
      // Known presets must match their reference architecture exactly.
      const EncoderParams ref = init_encoder(0, p.preset);
      bool same = ref.body.size() == p.body.size() && ref.head_mu.spec == p.head_mu.spec;
      for (std::size_t i = 0; same && i < ref.body.size(); ++i) same = ref.body[i].spec == p.body[i].spec;
      if (!same) throw ShapeError("layer layout differs from preset " + std::string(preset_name(p.preset)));
    }
  } catch (const ShapeError& e) {
    throw FormatError(std::string("encoder weights inconsistent: ") + e.what());
  }
  return p;
}

EncoderParams load_encoder(const std::filesystem::path& path) {
  try {
    return deserialize_encoder(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_tensors(const NamedTensors& tensors, const std::filesystem::path& path) {
  BinaryWriter w(SectionTag::tensors);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.string(name);
    w.tensor(t);
  }
  w.save(path);
}

NamedTensors load_tensors(const std::filesystem::path& path) {
  BinaryReader r = BinaryReader::open(path, SectionTag::tensors);
  NamedTensors out;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.string();
    out.emplace_back(std::move(name), r.tensor());
  }
  r.expect_end();
  return out;
}

}  // namespace lshield
