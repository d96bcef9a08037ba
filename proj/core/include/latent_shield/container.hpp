#pragma once

// "LSE1" weight/tensor container. Little-endian throughout:
//
//   magic    4 bytes  "LSE1"
//   section  u32      1 = encoder, 2 = denoiser, 3 = named tensors
//   payload  section specific, built from the primitives below
//
// Tensor record:  u32 rank, u32 dims[rank], f64 data[prod(dims)]
// Conv record:    u32 in, out, kernel, stride, padding, weight tensor, bias tensor
// String:         u32 length, bytes

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "latent_shield/conv_layer.hpp"
#include "latent_shield/encoder.hpp"

namespace lshield {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SectionTag : std::uint32_t { encoder = 1, denoiser = 2, tensors = 3 };

class BinaryWriter {
 public:
  explicit BinaryWriter(SectionTag section);

  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void string(const std::string& s);
  void tensor(const Tensor& t);
  void conv(const ConvLayer& layer);

  const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class BinaryReader {
 public:
  /// Verifies magic and section tag.
  BinaryReader(std::vector<std::uint8_t> bytes, SectionTag expected);
  static BinaryReader open(const std::filesystem::path& path, SectionTag expected);

  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string string();
  Tensor tensor();
  ConvLayer conv();

  bool at_end() const noexcept { return pos_ == buf_.size(); }
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

void save_encoder(const EncoderParams& params, const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_encoder(const EncoderParams& params);
EncoderParams load_encoder(const std::filesystem::path& path);
EncoderParams deserialize_encoder(std::vector<std::uint8_t> bytes);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;
void save_tensors(const NamedTensors& tensors, const std::filesystem::path& path);
NamedTensors load_tensors(const std::filesystem::path& path);

}  // namespace lshield
