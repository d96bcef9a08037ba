#pragma once

// L-infinity PGD protection drivers: encoder-only PGD (PID), FSGM's
// train-surrogate-then-attack, ASPL's alternating min-max, and pixel
// quantization round-trips.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "latent_shield/analytics.hpp"
#include "latent_shield/diffusion.hpp"
#include "latent_shield/losses.hpp"

namespace lshield {

enum class QuantizeMode { none, png8 };

struct AttackConfig {
  double epsilon = 0.05;
  double step_size = 0.005;
  std::size_t iterations = 1000;
  LossSpec loss;
  /// Sigma substitution used wherever an objective samples a latent.
  SigmaMode sigma_mode;
  std::uint64_t seed = 0;
  QuantizeMode quantize = QuantizeMode::png8;

  /// 0 < step_size <= epsilon <= 0.5 and iterations >= 1. epsilon = 0 is
  /// accepted as a degenerate budget (step_size is then ignored).
  void validate() const;
  /// key=value lines, used in error reports and manifests.
  std::string dump() const;
};

struct ProtectedResult {
  Tensor x_protected;
  Tensor delta;
  Trajectory trajectory;
  AttackConfig config_echo;
};

class AttackDiverged : public std::runtime_error {
 public:
  AttackDiverged(std::size_t step, const std::string& what) : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Where a PGD segment starts and how it is logged. ASPL runs many short
/// segments that share one trajectory.
struct PgdSegment {
  /// Warm start; empty means zero.
  Tensor delta_init;
  std::size_t iter_offset = 0;
  /// Iteration count of the whole run, for the record-every-5th rule.
  std::size_t total_iterations = 0;
  bool record_start = true;
  /// Seed of the frozen noise used to log stochastic objectives.
  std::uint64_t eval_seed = 0;
};

/// Signed-gradient ascent on `objective` (sign(0) taken as +1), projected onto
/// the epsilon ball and then the pixel box after every step. Appends records to
/// `traj`; returns the final (unquantized) delta.
Tensor run_pgd(const EncoderParams& encoder, const Tensor& x, const Objective& objective, const AttackConfig& cfg,
               Rng& rng, const PgdSegment& segment, Trajectory& traj);

/// Encoder-only protection with any latent loss kind.
ProtectedResult pgd_protect(const EncoderParams& encoder, const Tensor& x, const AttackConfig& cfg);

/// Seed of job `index` in a batch started from `master`.
std::uint64_t job_seed(std::uint64_t master, std::size_t index);

struct BatchItem {
  std::optional<ProtectedResult> result;
  /// Set when the job threw; the rest of the batch still runs.
  std::string error;
};

/// One pgd_protect job per image on up to `jobs` threads. Image i runs with
/// seed job_seed(cfg.seed, i), so results do not depend on `jobs`.
std::vector<BatchItem> protect_batch(const EncoderParams& encoder, std::span<const Tensor> images,
                                     const AttackConfig& cfg, std::size_t jobs);

struct SurrogateSetup {
  DenoiserParams init;
  NoiseSchedule schedule;
  /// Steps, lr and batch size for surrogate training. Its sigma_mode is ignored.
  TrainOptions train;
};

/// cfg.loss.kind == combo_fsgm adds lambda * loss_add_log; any other kind runs
/// the plain surrogate objective.
std::vector<ProtectedResult> fsgm_protect(const EncoderParams& encoder, std::span<const Tensor> images,
                                          PromptId c_prot, const AttackConfig& cfg, const SurrogateSetup& setup,
                                          DenoiserParams* surrogate_out = nullptr);

struct AsplSchedule {
  std::size_t outer = 50;
  std::size_t model_steps = 3;
  std::size_t delta_steps = 6;
};

/// cfg.iterations is ignored; the schedule fixes the step count.
/// cfg.loss.kind == combo_aspl adds lambda * loss_add_log.
std::vector<ProtectedResult> aspl_protect(const EncoderParams& encoder, std::span<const Tensor> images,
                                          PromptId c_prot, const AttackConfig& cfg, const AsplSchedule& schedule,
                                          const SurrogateSetup& setup, DenoiserParams* surrogate_out = nullptr);

struct Roundtrip {
  enum class Kind { png8, jpeg };
  Kind kind = Kind::png8;
  int quality = 75;

  static Roundtrip png8() { return {}; }
  static Roundtrip jpeg(int quality) { return {Kind::jpeg, quality}; }
};

/// png8: round(x * 255) / 255. jpeg: encode/decode through libjpeg.
Tensor quantize_roundtrip(const Tensor& x, const Roundtrip& mode);

/// Puts x + delta on the 1/255 grid while keeping |delta| <= epsilon: picks the
/// nearer of the two neighbouring levels that stays within budget and [0, 1],
/// falling back to delta = 0 when neither does.
Tensor quantize_delta_png8(const Tensor& x, const Tensor& delta, double epsilon);

}  // namespace lshield
