#pragma once

#include <cstddef>

#include "latent_shield/autodiff.hpp"
#include "latent_shield/rng.hpp"

namespace lshield {

struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  bool operator==(const ConvSpec&) const = default;
};

/// Weights (out, in, k, k) and bias (out) for one convolution.
struct ConvLayer {
  ConvSpec spec;
  Tensor weight;
  Tensor bias;

  /// Throws ShapeError if weight/bias shapes disagree with spec.
  void validate() const;
};

/// Weights uniform in +-gain/sqrt(fan_in), bias uniform in +-1/sqrt(fan_in).
ConvLayer init_conv(const ConvSpec& spec, Rng& rng, double gain = 1.0);

/// The layer's tensors placed on a tape, either as constants or as
/// trainable leaves.
struct BoundConv {
  ConvSpec spec;
  Var weight;
  Var bias;
};

BoundConv bind(Tape& tape, const ConvLayer& layer, bool trainable);

inline Var apply(const BoundConv& conv, Var x) {
  return conv2d(x, conv.weight, conv.bias, {conv.spec.stride, conv.spec.padding});
}

}  // namespace lshield
