#include "latent_shield/conv_layer.hpp"

#include <cmath>

namespace lshield {

void ConvLayer::validate() const {
  const Shape want_w{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  if (weight.shape() != want_w) {
    throw ShapeError("conv weight shape " + to_string(weight.shape()) + " != expected " +
                     to_string(want_w));
  }
  if (bias.shape() != Shape{spec.out_channels}) {
    throw ShapeError("conv bias shape " + to_string(bias.shape()) + " != expected [" +
                     std::to_string(spec.out_channels) + "]");
  }
  if (spec.stride == 0) throw ShapeError("conv stride must be positive");
}

ConvLayer init_conv(const ConvSpec& spec, Rng& rng, double gain) {
  ConvLayer layer;
  layer.spec = spec;
  const double fan_in = static_cast<double>(spec.in_channels * spec.kernel * spec.kernel);
  const double bound = 1.0 / std::sqrt(fan_in);
  layer.weight = rng.uniform_tensor({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel},
                                    -gain * bound, gain * bound);
  layer.bias = rng.uniform_tensor({spec.out_channels}, -bound, bound);
  return layer;
}

BoundConv bind(Tape& tape, const ConvLayer& layer, bool trainable) {
  return BoundConv{layer.spec, tape.leaf(layer.weight, trainable), tape.leaf(layer.bias, trainable)};
}

}  // namespace lshield
