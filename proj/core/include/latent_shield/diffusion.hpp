#pragma once

// Desk-scale DDPM pieces: linear noise schedule, forward noising, a three-layer
// conditional conv denoiser eps_theta(z_t, c, t), its training losses, and a
// plain-SGD fine-tuning loop over encoder-sampled latents.
//
// Timestep convention: z_t is noised to step t and denoised at step t
// (t in 1..T).

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "latent_shield/autodiff.hpp"
#include "latent_shield/conv_layer.hpp"
#include "latent_shield/encoder.hpp"
#include "latent_shield/rng.hpp"

namespace lshield {

struct NoiseSchedule {
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  std::size_t steps() const noexcept { return beta.size(); }
  /// Cumulative product at 1-based step t; throws std::out_of_range.
  double alpha_bar_at(std::size_t t) const;
};

/// Linear beta ramp over T steps. Requires 0 < beta_start <= beta_end < 1.
NoiseSchedule make_schedule(std::size_t steps, double beta_start, double beta_end);

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) noise.
Var forward_noise(Var z0, std::size_t t, const Tensor& noise, const NoiseSchedule& sched);

struct PromptId {
  std::uint32_t id = 0;
  bool operator==(const PromptId&) const = default;
};

/// Fixed prompt vocabulary standing in for text conditions.
struct PromptVocabulary {
  std::vector<std::string> names;

  std::size_t size() const noexcept { return names.size(); }
  const std::string& display(PromptId p) const;
  void check(PromptId p) const;
};

const PromptVocabulary& default_vocabulary();

struct DenoiserShape {
  std::size_t latent_channels = 4;
  std::size_t vocab_size = 4;
  std::size_t time_channels = 4;
  std::size_t hidden = 32;
  /// Value written into the active one-hot condition channel.
  double condition_scale = 1.0;

  bool operator==(const DenoiserShape&) const = default;
};

inline constexpr std::size_t kDenoiserLayers = 3;

struct DenoiserParams {
  DenoiserShape shape;
  std::uint64_t seed = 0;
  /// (latent + vocab + time) -> hidden -> hidden -> latent, 3x3, same padding.
  std::array<ConvLayer, kDenoiserLayers> layers;

  void validate() const;
};

DenoiserParams init_denoiser(std::uint64_t seed, const DenoiserShape& shape);

struct BoundDenoiser {
  const DenoiserParams* params = nullptr;
  std::array<BoundConv, kDenoiserLayers> layers;
};

BoundDenoiser bind(Tape& tape, const DenoiserParams& params, bool trainable);

/// Batched prediction on (N, L, h, w) noisy latents. A nullopt prompt selects
/// the unconditional path (all condition channels zero).
Var predict_noise(const BoundDenoiser& net, Var z_t, std::span<const std::optional<PromptId>> prompts,
                  std::span<const std::size_t> timesteps);

struct NoiseDraw {
  std::size_t t = 1;
  Tensor noise;
};

/// t uniform in {1..T}, noise ~ N(0, I) of the given latent shape.
NoiseDraw draw_noise(Rng& rng, const NoiseSchedule& sched, const Shape& latent_shape);

/// ||noise - predicted||^2 summed over elements.
Var noise_prediction_loss(Var predicted, const Tensor& noise);

/// Denoising loss for one (L, h, w) latent with a frozen (t, noise) draw.
Var denoise_loss(const BoundDenoiser& net, Var z0, std::optional<PromptId> prompt,
                 const NoiseDraw& draw, const NoiseSchedule& sched);

Var loss_uncond(const BoundDenoiser& net, Var z0, const NoiseSchedule& sched, Rng& rng);
Var loss_cond(const BoundDenoiser& net, PromptId prompt, Var z0, const NoiseSchedule& sched, Rng& rng);

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

struct TrainSample {
  Tensor image;
  PromptId prompt;
};

struct LatentSample {
  LatentDistribution dist;
  PromptId prompt;
};

struct TrainOptions {
  std::size_t steps = 100;
  double lr = 1e-3;
  /// 0 = whole dataset every step; otherwise items drawn with replacement.
  std::size_t batch_size = 0;
  /// Exploiter-side substitution applied when sampling training latents.
  SigmaMode sigma_mode;
};

struct TrainResult {
  DenoiserParams params;
  /// Mean per-sample loss at each step, before that step's update.
  std::vector<double> loss_trace;
};

/// Plain SGD on the conditional loss. Throws std::invalid_argument for
/// steps == 0 or an empty dataset, TrainingDiverged on a non-finite loss.
TrainResult train_denoiser(const DenoiserParams& init, std::span<const LatentSample> data,
                           const NoiseSchedule& sched, const TrainOptions& opts, Rng& rng);
TrainResult train_denoiser(const DenoiserParams& init, std::span<const TrainSample> data,
                           const EncoderParams& encoder, const NoiseSchedule& sched,
                           const TrainOptions& opts, Rng& rng);

/// Mean denoising loss of `params` over every (latent, draw) pair.
double heldout_loss(const DenoiserParams& params, std::span<const Tensor> latents,
                    std::optional<PromptId> prompt, std::span<const NoiseDraw> draws,
                    const NoiseSchedule& sched);

void save_denoiser(const DenoiserParams& params, const std::filesystem::path& path);
DenoiserParams load_denoiser(const std::filesystem::path& path);

}  // namespace lshield
