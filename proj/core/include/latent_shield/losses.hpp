#pragma once

// Protection objectives. Every loss is maximized by the attack drivers and
// evaluated on the perturbed image's latent distribution; clean-side
// statistics are detached constants held in a CleanLatentCache.
//
// Norms are sums over latent elements, not means.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "latent_shield/autodiff.hpp"
#include "latent_shield/diffusion.hpp"
#include "latent_shield/encoder.hpp"
#include "latent_shield/rng.hpp"

namespace lshield {

/// FNV-1a over the raw bytes of the shape and values.
std::uint64_t fingerprint(const Tensor& t);
std::uint64_t fingerprint(const EncoderParams& params);

/// encode(params, x_clean) with the (encoder, image) pair it came from.
class CleanLatentCache {
 public:
  CleanLatentCache() = default;
  CleanLatentCache(const EncoderParams& params, const Tensor& x_clean) { refresh(params, x_clean); }

  /// Re-encodes only if the encoder or image changed. Returns true if it did.
  bool refresh(const EncoderParams& params, const Tensor& x_clean);
  bool matches(const EncoderParams& params, const Tensor& x_clean) const;

  const Tensor& mu0() const { return dist_.mu; }
  const Tensor& logvar0() const { return dist_.logvar; }
  const Tensor& sigma0() const { return sigma0_; }
  const LatentDistribution& dist() const { return dist_; }
  bool empty() const noexcept { return dist_.mu.empty(); }

 private:
  LatentDistribution dist_;
  Tensor sigma0_;
  std::uint64_t encoder_key_ = 0;
  std::uint64_t image_key_ = 0;
};

enum class LogReduction { sum, mean };

Var loss_mean(const CleanLatentCache& cache, const LatentVar& pert);
Var loss_var(const CleanLatentCache& cache, const LatentVar& pert);
Var loss_add(const CleanLatentCache& cache, const LatentVar& pert);
/// loss_mean + reduce(logvar_pert - logvar0). The log-ratio of variances is a
/// plain logvar difference, so no exponentials are involved.
Var loss_add_log(const CleanLatentCache& cache, const LatentVar& pert,
                 LogReduction reduction = LogReduction::sum);

/// ||(mu_p + sigma_p eps1) - (mu0 + sigma0 eps2)||^2 with caller-supplied noise.
Var loss_sample(const CleanLatentCache& cache, const LatentVar& pert, const Tensor& eps1,
                const Tensor& eps2, const SigmaMode& mode = {});
/// Single-sample estimate with a fresh (eps1, eps2) pair drawn from rng.
Var loss_sample(const CleanLatentCache& cache, const LatentVar& pert, Rng& rng,
                const SigmaMode& mode = {});

/// -||mu_pert - mu_target||^2; maximizing pulls the mean toward the target.
Var loss_mean_targeted(const LatentVar& pert, const Tensor& mu_target);

/// T + lambda * L.
Var loss_combo(Var t_term, Var l_term, double lambda);

/// Deterministic checkerboard in [0, 1] used as the default target image.
Tensor checkerboard_target(const Shape& image_shape, std::size_t cell = 4);

enum class LossKind { mean, var, sample, add, add_log, mean_targeted, combo_fsgm, combo_aspl };

/// CLI names: mean, var, sample, add, add-log, mean-target, combo-fsgm, combo-aspl.
LossKind parse_loss_kind(std::string_view name);
std::string_view loss_kind_name(LossKind kind);
/// combo_fsgm and combo_aspl need a surrogate denoiser.
bool needs_denoiser(LossKind kind);

struct LossSpec {
  LossKind kind = LossKind::add_log;
  /// Weight of the latent term in the combo losses.
  double lambda = 0.05;
  LogReduction log_reduction = LogReduction::sum;
  /// loss_sample: reuse one noise pair for the whole run instead of a fresh
  /// pair per step.
  bool frozen_sample_noise = false;
  /// mean_targeted: target image; empty selects checkerboard_target.
  Tensor target;

  void validate() const;
};

struct ObjectiveEval {
  Var loss;
  LatentVar latent;
};

/// A loss as a function of the perturbed image. `stochastic` objectives draw
/// from the rng they are handed; deterministic ones ignore it. Objectives hold
/// references to the encoder, denoiser and schedule they were built from.
struct Objective {
  std::function<ObjectiveEval(Tape&, Var x_pert, Rng& rng)> fn;
  bool stochastic = false;
  std::string label;

  ObjectiveEval operator()(Tape& tape, Var x_pert, Rng& rng) const { return fn(tape, x_pert, rng); }
};

/// Encoder-only objectives (every kind except the combos).
Objective make_latent_objective(const EncoderParams& encoder, const Tensor& x_clean, const LossSpec& spec,
                                const SigmaMode& mode = {});

/// Denoising loss of `denoiser` under prompt c on a latent sampled from the
/// perturbed image's encoding, plus lambda * loss_add_log. lambda = 0 gives the
/// plain surrogate objective used by FSGM and ASPL.
Objective make_denoiser_objective(const EncoderParams& encoder, const Tensor& x_clean,
                                  const DenoiserParams& denoiser, const NoiseSchedule& sched,
                                  PromptId prompt, double lambda, const SigmaMode& mode = {});

}  // namespace lshield
