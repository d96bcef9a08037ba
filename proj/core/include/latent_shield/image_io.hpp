#pragma once

// 8-bit RGB PNG and baseline JPEG codecs for (3, H, W) tensors in [0, 1].

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "latent_shield/tensor.hpp"

namespace lshield {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gray, palette, alpha and 16-bit inputs are converted to 8-bit RGB.
Tensor read_png(const std::filesystem::path& path);
/// Values are clamped to [0, 1] and rounded to the nearest 1/255 level.
void write_png(const std::filesystem::path& path, const Tensor& image);

std::vector<std::uint8_t> encode_png(const Tensor& image);
Tensor decode_png(const std::vector<std::uint8_t>& bytes);

/// Baseline JPEG, 4:2:0 chroma subsampling, quality in [1, 100].
std::vector<std::uint8_t> encode_jpeg(const Tensor& image, int quality);
Tensor decode_jpeg(const std::vector<std::uint8_t>& bytes);

/// round(x * 255) after clamping to [0, 1].
std::uint8_t to_byte(double v);

}  // namespace lshield
