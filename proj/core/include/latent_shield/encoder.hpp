#pragma once

// Convolutional Gaussian image encoder: image -> N(mu, exp(logvar)) per latent
// element, with reparameterized sampling and the sigma substitutions used by
// adaptive attacks.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "latent_shield/autodiff.hpp"
#include "latent_shield/conv_layer.hpp"

namespace lshield {

enum class EncoderPreset : std::uint32_t {
  tiny8x = 1,        // 3 stride-2 convs, 4 latent channels
  micro4x = 2,       // 2 stride-2 convs, 2 latent channels
  debug_linear = 3,  // single linear patch projection, closed-form oracles
};

std::string_view preset_name(EncoderPreset preset);
/// Accepts "tiny-8x", "micro-4x", "debug-linear"; throws std::invalid_argument.
EncoderPreset parse_preset(std::string_view name);

struct EncoderParams {
  EncoderPreset preset = EncoderPreset::tiny8x;
  std::uint64_t seed = 0;
  std::string version_tag;
  /// Hidden layers, each followed by SiLU.
  std::vector<ConvLayer> body;
  ConvLayer head_mu;
  ConvLayer head_logvar;

  std::size_t in_channels() const;
  std::size_t latent_channels() const { return head_mu.spec.out_channels; }
  /// Product of all strides; image sides must be multiples of it.
  std::size_t downsample_factor() const;
  Shape latent_shape(const Shape& image_shape) const;

  /// Layer chaining, head agreement, and weight shapes.
  void validate() const;
};

/// Seeded scaled-uniform initialization; bit-reproducible per (seed, preset).
EncoderParams init_encoder(std::uint64_t seed, EncoderPreset preset);

/// Linear debug encoder: mu = W_mu * patch + b_mu, logvar = W_lv * patch + b_lv
/// over non-overlapping `patch` x `patch` blocks. Weights are (L, C, p, p).
EncoderParams make_linear_encoder(Tensor w_mu, Tensor b_mu, Tensor w_logvar, Tensor b_logvar);

struct LatentDistribution {
  Tensor mu;
  Tensor logvar;

  Tensor sigma() const;
};

/// Differentiable counterpart of LatentDistribution.
struct LatentVar {
  Var mu;
  Var logvar;
};

/// Encodes a (C, H, W) image. Throws ShapeError when H or W is not a
/// multiple of the downsample factor, or when values leave [0, 1] by more
/// than 1e-6 (smaller excursions are accepted with a warning).
LatentVar encode(Tape& tape, const EncoderParams& params, Var image);
LatentDistribution encode(const EncoderParams& params, const Tensor& image);

/// z = mu + exp(logvar / 2) * noise.
Var sample(const LatentVar& dist, const Tensor& noise);
Tensor sample(const LatentDistribution& dist, const Tensor& noise);

struct SigmaMode {
  enum class Kind { natural, zero, clipped, fixed };
  Kind kind = Kind::natural;
  /// Clip ceiling or fixed value; unused for natural and zero.
  double value = 0.0;

  static SigmaMode natural() { return {}; }
  static SigmaMode zero() { return {Kind::zero, 0.0}; }
  static SigmaMode clipped(double max_sigma);
  static SigmaMode fixed(double sigma);

  std::string label() const;
  bool operator==(const SigmaMode&) const = default;
};

/// Parses "natural", "zero", "clipped:1e-7", "fixed:1e-7".
SigmaMode parse_sigma_mode(std::string_view text);

/// Latent statistics with an explicit sigma array. Sigma may be exactly zero
/// here, which a log-variance cannot represent.
struct ResolvedLatent {
  Tensor mu;
  Tensor sigma;
};

/// mu is copied untouched; sigma is substituted per mode.
ResolvedLatent apply_sigma_mode(const LatentDistribution& dist, const SigmaMode& mode);
Tensor sample(const ResolvedLatent& dist, const Tensor& noise);

/// Differentiable sampling under a sigma mode. Natural mode is identical to
/// sample(dist, noise); the other modes cut the logvar path.
Var sample(const LatentVar& dist, const Tensor& noise, const SigmaMode& mode);

}  // namespace lshield
