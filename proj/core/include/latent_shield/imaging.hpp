#pragma once

// Image corruptions, quality metrics and synthetic test images.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "latent_shield/rng.hpp"
#include "latent_shield/tensor.hpp"

namespace lshield {

struct CorruptionSpec {
  enum class Kind { resize_crop, smooth_uniform, gaussian_denoise, jpeg };
  Kind kind = Kind::jpeg;
  /// resize_crop: crop side fraction drawn uniformly from [scale_min, scale_max].
  double scale_min = 0.8;
  double scale_max = 1.0;
  /// smooth_uniform: noise amplitude a, noise ~ U(-a, a).
  double amplitude = 0.0;
  /// gaussian_denoise: blur kernel standard deviation in pixels.
  double sigma = 1.0;
  int quality = 75;
  std::uint64_t seed = 0;

  static CorruptionSpec resize_crop(double scale_min, double scale_max, std::uint64_t seed = 0);
  static CorruptionSpec smooth_uniform(double amplitude, std::uint64_t seed = 0);
  static CorruptionSpec gaussian_denoise(double sigma);
  static CorruptionSpec jpeg(int quality = 75);

  void validate() const;
  std::string label() const;
};

/// Maps [0, 1] images to [0, 1] images.
Tensor corrupt(const Tensor& x, const CorruptionSpec& spec);

/// Bilinear resampling with half-pixel centres and edge clamping.
Tensor resize_bilinear(const Tensor& x, std::size_t height, std::size_t width);
/// Normalized 1-D Gaussian taps, radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);
/// Separable blur, edge samples replicated.
Tensor gaussian_blur(const Tensor& x, double sigma);

/// Mean local SSIM (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03, valid
/// region), averaged over channels. Both sides need H, W >= 11.
double ssim(const Tensor& x, const Tensor& y);

/// 10 log10(1 / MSE); +infinity for identical images.
double psnr(const Tensor& x, const Tensor& y);
inline constexpr double kPsnrCap = 99.0;
/// psnr clamped to kPsnrCap, as written to reports.
double psnr_capped(const Tensor& x, const Tensor& y);

/// Smooth background, soft blobs and mild texture.
Tensor synthetic_natural_image(Rng& rng, std::size_t height, std::size_t width);

/// Identity of a synthetic subject; images of one subject share these colours
/// and proportions while pose and background vary.
struct SubjectStyle {
  double skin[3];
  double hair[3];
  double eye_spacing;
  double face_aspect;
};

SubjectStyle random_subject(Rng& rng);
Tensor synthetic_subject_image(const SubjectStyle& subject, Rng& rng, std::size_t height, std::size_t width);

}  // namespace lshield
