#include "latent_shield/diffusion.hpp"

#include <cmath>
#include <sstream>

#include "latent_shield/container.hpp"

namespace lshield {

double NoiseSchedule::alpha_bar_at(std::size_t t) const {
  if (t < 1 || t > steps()) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside 1.." + std::to_string(steps()));
  }
  return alpha_bar[t - 1];
}

NoiseSchedule make_schedule(std::size_t steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("noise schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("noise schedule requires 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  double running = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    s.beta[i] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[i] = 1.0 - s.beta[i];
    running *= s.alpha[i];
    s.alpha_bar[i] = running;
  }
  return s;
}

Var forward_noise(Var z0, std::size_t t, const Tensor& noise, const NoiseSchedule& sched) {
  require_same_shape(z0.value(), noise, "forward_noise");
  const double ab = sched.alpha_bar_at(t);
  Var scaled = mul_const(z0, std::sqrt(ab));
  return scaled + z0.tape().constant(std::sqrt(1.0 - ab) * noise);
}

const std::string& PromptVocabulary::display(PromptId p) const {
  check(p);
  return names[p.id];
}

void PromptVocabulary::check(PromptId p) const {
  if (p.id >= names.size()) {
    throw std::invalid_argument("prompt id " + std::to_string(p.id) + " outside vocabulary of " +
                                std::to_string(names.size()));
  }
}

const PromptVocabulary& default_vocabulary() {
  static const PromptVocabulary vocab{{"photo-of-person", "photo-of-face", "dslr-portrait", "hq-portrait"}};
  return vocab;
}

void DenoiserParams::validate() const {
  const std::size_t in = shape.latent_channels + shape.vocab_size + shape.time_channels;
  const ConvSpec want[kDenoiserLayers] = {{in, shape.hidden, 3, 1, 1},
                                          {shape.hidden, shape.hidden, 3, 1, 1},
                                          {shape.hidden, shape.latent_channels, 3, 1, 1}};
  for (std::size_t i = 0; i < kDenoiserLayers; ++i) {
    layers[i].validate();
    if (!(layers[i].spec == want[i])) {
      throw ShapeError("denoiser layer " + std::to_string(i) + " does not match its shape descriptor");
    }
  }
  if (shape.time_channels % 2 != 0) throw ShapeError("denoiser time channels must be even");
}

DenoiserParams init_denoiser(std::uint64_t seed, const DenoiserShape& shape) {
  Rng rng(seed);
  DenoiserParams p;
  p.shape = shape;
  p.seed = seed;
  const std::size_t in = shape.latent_channels + shape.vocab_size + shape.time_channels;
  p.layers[0] = init_conv({in, shape.hidden, 3, 1, 1}, rng);
  p.layers[1] = init_conv({shape.hidden, shape.hidden, 3, 1, 1}, rng);
  p.layers[2] = init_conv({shape.hidden, shape.latent_channels, 3, 1, 1}, rng);
  p.validate();
  return p;
}

BoundDenoiser bind(Tape& tape, const DenoiserParams& params, bool trainable) {
  BoundDenoiser net;
  net.params = &params;
  for (std::size_t i = 0; i < kDenoiserLayers; ++i) net.layers[i] = bind(tape, params.layers[i], trainable);
  return net;
}

Var predict_noise(const BoundDenoiser& net, Var z_t, std::span<const std::optional<PromptId>> prompts,
                  std::span<const std::size_t> timesteps) {
  const DenoiserShape& shape = net.params->shape;
  const Shape& zs = z_t.shape();
  if (zs.size() != 4 || zs[1] != shape.latent_channels) {
    throw ShapeError("denoiser expects (N, " + std::to_string(shape.latent_channels) +
                     ", h, w) latents, got " + to_string(zs));
  }
  const std::size_t n = zs[0], plane = zs[2] * zs[3];
  if (prompts.size() != n || timesteps.size() != n) {
    throw ShapeError("denoiser batch of " + std::to_string(n) + " needs as many prompts and timesteps");
  }
  Tensor onehot(Shape{n, shape.vocab_size, zs[2], zs[3]}, 0.0);
  Tensor time(Shape{n, shape.time_channels, zs[2], zs[3]}, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    if (prompts[b]) {
      if (prompts[b]->id >= shape.vocab_size) {
        throw std::invalid_argument("prompt id " + std::to_string(prompts[b]->id) +
                                    " outside denoiser vocabulary of " + std::to_string(shape.vocab_size));
      }
      std::fill_n(onehot.data().data() + (b * shape.vocab_size + prompts[b]->id) * plane, plane,
                  shape.condition_scale);
    }
    double* base = time.data().data() + b * shape.time_channels * plane;
    const double t = static_cast<double>(timesteps[b]);
    const std::size_t half = shape.time_channels / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
      std::fill_n(base + (2 * k) * plane, plane, std::sin(t * freq));
      std::fill_n(base + (2 * k + 1) * plane, plane, std::cos(t * freq));
    }
  }
  Tape& tape = z_t.tape();
  Var h = concat_channels(concat_channels(z_t, tape.constant(std::move(onehot))), tape.constant(std::move(time)));
  h = silu(apply(net.layers[0], h));
  h = silu(apply(net.layers[1], h));
  return apply(net.layers[2], h);
}

NoiseDraw draw_noise(Rng& rng, const NoiseSchedule& sched, const Shape& latent_shape) {
  NoiseDraw d;
  d.t = 1 + static_cast<std::size_t>(rng.below(sched.steps()));
  d.noise = rng.normal_tensor(latent_shape);
  return d;
}

Var noise_prediction_loss(Var predicted, const Tensor& noise) {
  Var target = predicted.tape().constant(noise.reshaped(predicted.shape()));
  return sum(square(target - predicted));
}

Var denoise_loss(const BoundDenoiser& net, Var z0, std::optional<PromptId> prompt,
                 const NoiseDraw& draw, const NoiseSchedule& sched) {
  const Shape& s = z0.shape();
  if (s.size() != 3) throw ShapeError("denoise_loss expects an (L, h, w) latent, got " + to_string(s));
  Var z_t = forward_noise(z0, draw.t, draw.noise, sched);
  Var batch = reshape(z_t, {1, s[0], s[1], s[2]});
  const std::optional<PromptId> prompts[1] = {prompt};
  const std::size_t ts[1] = {draw.t};
  return noise_prediction_loss(predict_noise(net, batch, prompts, ts), draw.noise);
}

Var loss_uncond(const BoundDenoiser& net, Var z0, const NoiseSchedule& sched, Rng& rng) {
  return denoise_loss(net, z0, std::nullopt, draw_noise(rng, sched, z0.shape()), sched);
}

Var loss_cond(const BoundDenoiser& net, PromptId prompt, Var z0, const NoiseSchedule& sched, Rng& rng) {
  if (prompt.id >= net.params->shape.vocab_size) {
    throw std::invalid_argument("prompt id " + std::to_string(prompt.id) + " outside vocabulary");
  }
  return denoise_loss(net, z0, prompt, draw_noise(rng, sched, z0.shape()), sched);
}

TrainResult train_denoiser(const DenoiserParams& init, std::span<const LatentSample> data,
                           const NoiseSchedule& sched, const TrainOptions& opts, Rng& rng) {
  if (opts.steps < 1) throw std::invalid_argument("train_denoiser needs steps >= 1");
  if (data.empty()) throw std::invalid_argument("train_denoiser needs a non-empty dataset");
  std::vector<ResolvedLatent> resolved;
  resolved.reserve(data.size());
  for (const LatentSample& s : data) resolved.push_back(apply_sigma_mode(s.dist, opts.sigma_mode));
  const Shape latent = data.front().dist.mu.shape();
  for (const ResolvedLatent& r : resolved) require_same_shape(r.mu, data.front().dist.mu, "training latents");
  const std::size_t batch = opts.batch_size == 0 ? data.size() : opts.batch_size;
  const std::size_t plane_size = numel(latent);

  TrainResult result{init, {}};
  result.loss_trace.reserve(opts.steps);
  DenoiserParams& p = result.params;

  std::vector<std::optional<PromptId>> prompts(batch);
  std::vector<std::size_t> ts(batch);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    Tensor z_t(Shape{batch, latent[0], latent[1], latent[2]});
    Tensor eps(z_t.shape());
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t idx = opts.batch_size == 0 ? b : static_cast<std::size_t>(rng.below(data.size()));
      const Tensor z0 = sample(resolved[idx], rng.normal_tensor(latent));
      const NoiseDraw d = draw_noise(rng, sched, latent);
      const double ab = sched.alpha_bar_at(d.t);
      const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
      for (std::size_t i = 0; i < plane_size; ++i) {
        z_t[b * plane_size + i] = a * z0[i] + s * d.noise[i];
        eps[b * plane_size + i] = d.noise[i];
      }
      prompts[b] = data[idx].prompt;
      ts[b] = d.t;
    }
    Tape tape;
    BoundDenoiser net = bind(tape, p, true);
    Var pred = predict_noise(net, tape.constant(z_t), prompts, ts);
    Var loss = mul_const(noise_prediction_loss(pred, eps), 1.0 / static_cast<double>(batch));
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
      throw TrainingDiverged(step, "denoiser training diverged at step " + std::to_string(step) +
                                       " (loss " + std::to_string(value) + ")");
    }
    result.loss_trace.push_back(value);
    tape.backward(loss);
    for (std::size_t i = 0; i < kDenoiserLayers; ++i) {
      const Tensor gw = tape.grad(net.layers[i].weight);
      const Tensor gb = tape.grad(net.layers[i].bias);
      for (std::size_t k = 0; k < gw.size(); ++k) p.layers[i].weight[k] -= opts.lr * gw[k];
      for (std::size_t k = 0; k < gb.size(); ++k) p.layers[i].bias[k] -= opts.lr * gb[k];
    }
  }
  return result;
}

TrainResult train_denoiser(const DenoiserParams& init, std::span<const TrainSample> data,
                           const EncoderParams& encoder, const NoiseSchedule& sched,
                           const TrainOptions& opts, Rng& rng) {
  std::vector<LatentSample> latents;
  latents.reserve(data.size());
  for (const TrainSample& s : data) latents.push_back({encode(encoder, s.image), s.prompt});
  return train_denoiser(init, latents, sched, opts, rng);
}

double heldout_loss(const DenoiserParams& params, std::span<const Tensor> latents,
                    std::optional<PromptId> prompt, std::span<const NoiseDraw> draws,
                    const NoiseSchedule& sched) {
  if (latents.empty() || draws.empty()) throw std::invalid_argument("heldout_loss needs latents and draws");
  const Shape& ls = latents.front().shape();
  const std::size_t n = latents.size() * draws.size(), plane = numel(ls);
  Tensor z_t(Shape{n, ls[0], ls[1], ls[2]});
  Tensor eps(z_t.shape());
  std::vector<std::optional<PromptId>> prompts(n, prompt);
  std::vector<std::size_t> ts(n);
  std::size_t b = 0;
  for (const Tensor& z0 : latents) {
    require_same_shape(z0, latents.front(), "held-out latents");
    for (const NoiseDraw& d : draws) {
      const double ab = sched.alpha_bar_at(d.t);
      const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
      for (std::size_t i = 0; i < plane; ++i) {
        z_t[b * plane + i] = a * z0[i] + s * d.noise[i];
        eps[b * plane + i] = d.noise[i];
      }
      ts[b] = d.t;
      ++b;
    }
  }
  Tape tape;
  BoundDenoiser net = bind(tape, params, false);
  Var pred = predict_noise(net, tape.constant(z_t), prompts, ts);
  return noise_prediction_loss(pred, eps).value().item() / static_cast<double>(n);
}

void save_denoiser(const DenoiserParams& params, const std::filesystem::path& path) {
  BinaryWriter w(SectionTag::denoiser);
  w.u32(static_cast<std::uint32_t>(params.shape.latent_channels));
  w.u32(static_cast<std::uint32_t>(params.shape.vocab_size));
  w.u32(static_cast<std::uint32_t>(params.shape.time_channels));
  w.u32(static_cast<std::uint32_t>(params.shape.hidden));
  w.f64(params.shape.condition_scale);
  w.u64(params.seed);
  w.u32(static_cast<std::uint32_t>(kDenoiserLayers));
  for (const ConvLayer& l : params.layers) w.conv(l);
  w.save(path);
}

DenoiserParams load_denoiser(const std::filesystem::path& path) {
  try {
    BinaryReader r = BinaryReader::open(path, SectionTag::denoiser);
    DenoiserParams p;
    p.shape.latent_channels = r.u32();
    p.shape.vocab_size = r.u32();
    p.shape.time_channels = r.u32();
    p.shape.hidden = r.u32();
    p.shape.condition_scale = r.f64();
    p.seed = r.u64();
    if (r.u32() != kDenoiserLayers) throw FormatError("denoiser layer count mismatch");
    for (ConvLayer& l : p.layers) l = r.conv();
    r.expect_end();
    p.validate();
    return p;
  } catch (const ShapeError& e) {
    throw FormatError(path.string() + ": denoiser weights inconsistent: " + e.what());
  }
}

}  // namespace lshield
