#include "latent_shield/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "latent_shield/log.hpp"

namespace lshield {

namespace {

// Shifts the initial log-variance so sigma starts well below the typical
// spread of mu, as in trained VAE encoders.
constexpr double kLogvarBiasOffset = -6.0;

constexpr double kRangeSlack = 1e-6;

// He-uniform weight scale, so activations keep their spread through the
// stack and mu responds to pixel changes the way a trained encoder's does.
const double kWeightGain = std::sqrt(6.0);

std::string make_version_tag(EncoderPreset preset, std::uint64_t seed) {
  std::ostringstream os;
  os << "lshield-encoder/" << preset_name(preset) << "/seed=" << seed << "/v1";
  return os.str();
}

void check_image(const Tensor& image, const EncoderParams& params) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw ShapeError("encode expects a (C, H, W) image, got " + to_string(s));
  if (s[0] != params.in_channels()) {
    throw ShapeError("encoder expects " + std::to_string(params.in_channels()) +
                     " image channels, got " + to_string(s));
  }
  const std::size_t f = params.downsample_factor();
  if (s[1] % f != 0 || s[2] % f != 0) {
    throw ShapeError("image " + to_string(s) + ": height and width must be multiples of " +
                     std::to_string(f));
  }
  double lo = 0.0, hi = 1.0;
  for (double v : image.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo < -kRangeSlack || hi > 1.0 + kRangeSlack) {
    throw std::invalid_argument("image values must lie in [0, 1]; found range [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  if (lo < 0.0 || hi > 1.0) log_warning("encode: image values marginally outside [0, 1]");
}

}  // namespace

std::string_view preset_name(EncoderPreset preset) {
  switch (preset) {
    case EncoderPreset::tiny8x: return "tiny-8x";
    case EncoderPreset::micro4x: return "micro-4x";
    case EncoderPreset::debug_linear: return "debug-linear";
  }
  return "unknown";
}

EncoderPreset parse_preset(std::string_view name) {
  if (name == "tiny-8x") return EncoderPreset::tiny8x;
  if (name == "micro-4x") return EncoderPreset::micro4x;
  if (name == "debug-linear") return EncoderPreset::debug_linear;
  throw std::invalid_argument("unknown encoder preset '" + std::string(name) +
                              "' (expected tiny-8x, micro-4x or debug-linear)");
}

std::size_t EncoderParams::in_channels() const {
  return body.empty() ? head_mu.spec.in_channels : body.front().spec.in_channels;
}

std::size_t EncoderParams::downsample_factor() const {
  std::size_t f = head_mu.spec.stride;
  for (const ConvLayer& l : body) f *= l.spec.stride;
  return f;
}

Shape EncoderParams::latent_shape(const Shape& image_shape) const {
  const std::size_t f = downsample_factor();
  return {latent_channels(), image_shape.at(1) / f, image_shape.at(2) / f};
}

void EncoderParams::validate() const {
  std::size_t channels = in_channels();
  for (const ConvLayer& l : body) {
    l.validate();
    if (l.spec.in_channels != channels) throw ShapeError("encoder layers do not chain");
    // Stride-s layers must map s*n inputs to exactly n outputs.
    if (l.spec.kernel != 2 * l.spec.padding + l.spec.stride &&
        l.spec.kernel != 2 * l.spec.padding + 1) {
      throw ShapeError("encoder layer geometry does not divide spatial dims by its stride");
    }
    channels = l.spec.out_channels;
  }
  head_mu.validate();
  head_logvar.validate();
  if (head_mu.spec != head_logvar.spec) throw ShapeError("head_mu and head_logvar specs differ");
  if (head_mu.spec.in_channels != channels) throw ShapeError("encoder heads do not chain");
  if (head_mu.spec.kernel != head_mu.spec.stride || head_mu.spec.padding != 0) {
    throw ShapeError("encoder heads must be non-overlapping patch projections");
  }
}

EncoderParams init_encoder(std::uint64_t seed, EncoderPreset preset) {
  Rng rng(seed);
  EncoderParams p;
  p.preset = preset;
  p.seed = seed;
  p.version_tag = make_version_tag(preset, seed);
  std::vector<std::size_t> widths;
  std::size_t latent = 0;
  switch (preset) {
    case EncoderPreset::tiny8x:
      widths = {3, 16, 32, 32};
      latent = 4;
      break;
    case EncoderPreset::micro4x:
      widths = {3, 8, 16};
      latent = 2;
      break;
    case EncoderPreset::debug_linear: {
      Rng lin(seed);
      const double bound = 1.0 / std::sqrt(12.0);
      Tensor w_mu = lin.uniform_tensor({1, 3, 2, 2}, -bound, bound);
      Tensor b_mu = lin.uniform_tensor({1}, -bound, bound);
      Tensor w_lv = lin.uniform_tensor({1, 3, 2, 2}, -bound, bound);
      Tensor b_lv = lin.uniform_tensor({1}, -bound, bound);
      b_lv[0] += kLogvarBiasOffset;
      EncoderParams d = make_linear_encoder(w_mu, b_mu, w_lv, b_lv);
      d.preset = preset;
      d.seed = seed;
      d.version_tag = make_version_tag(preset, seed);
      return d;
    }
    default:
      throw std::invalid_argument("unknown encoder preset id " +
                                  std::to_string(static_cast<std::uint32_t>(preset)));
  }
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    p.body.push_back(init_conv({widths[i], widths[i + 1], 3, 2, 1}, rng, kWeightGain));
  }
  const ConvSpec head{widths.back(), latent, 1, 1, 0};
  p.head_mu = init_conv(head, rng, kWeightGain);
  p.head_logvar = init_conv(head, rng, kWeightGain);
  for (double& b : p.head_logvar.bias.data()) b += kLogvarBiasOffset;
  p.validate();
  return p;
}

EncoderParams make_linear_encoder(Tensor w_mu, Tensor b_mu, Tensor w_logvar, Tensor b_logvar) {
  if (w_mu.rank() != 4 || w_mu.dim(2) != w_mu.dim(3)) {
    throw ShapeError("linear encoder weights must be (L, C, p, p), got " + to_string(w_mu.shape()));
  }
  const ConvSpec spec{w_mu.dim(1), w_mu.dim(0), w_mu.dim(2), w_mu.dim(2), 0};
  EncoderParams p;
  p.preset = EncoderPreset::debug_linear;
  p.version_tag = "lshield-encoder/debug-linear/explicit/v1";
  p.head_mu = ConvLayer{spec, std::move(w_mu), std::move(b_mu)};
  p.head_logvar = ConvLayer{spec, std::move(w_logvar), std::move(b_logvar)};
  p.validate();
  return p;
}

Tensor LatentDistribution::sigma() const {
  Tensor s = logvar;
  for (double& v : s.data()) v = std::exp(0.5 * v);
  return s;
}

LatentVar encode(Tape& tape, const EncoderParams& params, Var image) {
  check_image(image.value(), params);
  const Shape& s = image.shape();
  Var h = reshape(image, {1, s[0], s[1], s[2]});
  for (const ConvLayer& layer : params.body) h = silu(apply(bind(tape, layer, false), h));
  Var mu = apply(bind(tape, params.head_mu, false), h);
  Var lv = apply(bind(tape, params.head_logvar, false), h);
  const Shape ls = params.latent_shape(s);
  return {reshape(mu, ls), reshape(lv, ls)};
}

LatentDistribution encode(const EncoderParams& params, const Tensor& image) {
  Tape tape;
  LatentVar d = encode(tape, params, tape.constant(image));
  return {d.mu.value(), d.logvar.value()};
}

Var sample(const LatentVar& dist, const Tensor& noise) {
  require_same_shape(dist.mu.value(), noise, "sample noise");
  Tape& tape = dist.mu.tape();
  Var sigma = exp(mul_const(dist.logvar, 0.5));
  return dist.mu + sigma * tape.constant(noise);
}

Tensor sample(const LatentDistribution& dist, const Tensor& noise) {
  require_same_shape(dist.mu, noise, "sample noise");
  Tensor z = dist.mu;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * dist.logvar[i]) * noise[i];
  return z;
}

SigmaMode SigmaMode::clipped(double max_sigma) {
  if (!(max_sigma > 0.0)) throw std::invalid_argument("clipped sigma ceiling must be > 0");
  return {Kind::clipped, max_sigma};
}

SigmaMode SigmaMode::fixed(double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("fixed sigma must be >= 0");
  return {Kind::fixed, sigma};
}

std::string SigmaMode::label() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::natural: return "natural";
    case Kind::zero: return "zero";
    case Kind::clipped: os << "clipped:" << value; break;
    case Kind::fixed: os << "fixed:" << value; break;
  }
  return os.str();
}

SigmaMode parse_sigma_mode(std::string_view text) {
  if (text == "natural") return SigmaMode::natural();
  if (text == "zero") return SigmaMode::zero();
  const auto colon = text.find(':');
  if (colon != std::string_view::npos) {
    const std::string_view kind = text.substr(0, colon);
    const std::string number(text.substr(colon + 1));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(number, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == number.size() && used > 0) {
      if (kind == "clipped") return SigmaMode::clipped(v);
      if (kind == "fixed") return SigmaMode::fixed(v);
    }
  }
  throw std::invalid_argument("bad sigma mode '" + std::string(text) +
                              "' (expected natural, zero, clipped:<max> or fixed:<value>)");
}

ResolvedLatent apply_sigma_mode(const LatentDistribution& dist, const SigmaMode& mode) {
  ResolvedLatent out{dist.mu, dist.sigma()};
  switch (mode.kind) {
    case SigmaMode::Kind::natural: break;
    case SigmaMode::Kind::zero:
      for (double& s : out.sigma.data()) s = 0.0;
      break;
    case SigmaMode::Kind::clipped:
      for (double& s : out.sigma.data()) s = std::min(s, mode.value);
      break;
    case SigmaMode::Kind::fixed:
      for (double& s : out.sigma.data()) s = mode.value;
      break;
  }
  return out;
}

Tensor sample(const ResolvedLatent& dist, const Tensor& noise) {
  require_same_shape(dist.mu, noise, "sample noise");
  Tensor z = dist.mu;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += dist.sigma[i] * noise[i];
  return z;
}

Var sample(const LatentVar& dist, const Tensor& noise, const SigmaMode& mode) {
  if (mode.kind == SigmaMode::Kind::natural) return sample(dist, noise);
  require_same_shape(dist.mu.value(), noise, "sample noise");
  const ResolvedLatent r =
      apply_sigma_mode(LatentDistribution{dist.mu.value(), dist.logvar.value()}, mode);
  Tensor offset = noise;
  for (std::size_t i = 0; i < offset.size(); ++i) offset[i] *= r.sigma[i];
  return dist.mu + dist.mu.tape().constant(std::move(offset));
}

}  // namespace lshield
