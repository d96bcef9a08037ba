#pragma once

// Desk-scale robustness experiments. Each seed builds a synthetic subject
// (training and held-out images), protects the training images, fine-tunes a
// pretrained toy denoiser on them and scores the result by the conditional
// denoising loss on held-out clean latents of the same subject. Higher
// held-out loss after fine-tuning on protected data means stronger protection.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "latent_shield/analytics.hpp"
#include "latent_shield/attack.hpp"
#include "latent_shield/diffusion.hpp"
#include "latent_shield/imaging.hpp"

namespace lshield {

struct WorldConfig {
  std::size_t image_size = 32;
  std::size_t train_images = 6;
  std::size_t heldout_images = 4;
  /// Fixed (t, noise) pairs per held-out latent.
  std::size_t heldout_draws = 16;
  /// Generic pretraining corpus: subjects x images, random prompt labels.
  std::size_t generic_subjects = 24;
  std::size_t generic_images_per_subject = 2;
  std::size_t pretrain_steps = 800;
  std::size_t finetune_steps = 200;
  std::size_t batch_size = 0;
  double lr = 0.002;
  std::size_t timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  DenoiserShape denoiser;
  std::uint64_t world_seed = 0;

  void validate() const;
  NoiseSchedule schedule() const;
};

struct SubjectData {
  SubjectStyle style;
  std::vector<Tensor> train;
  std::vector<Tensor> heldout;
};

SubjectData make_subject_data(const WorldConfig& world, std::uint64_t seed);

/// Toy denoiser trained on the generic corpus; shared by every seed.
DenoiserParams pretrain_base(const EncoderParams& encoder, const WorldConfig& world);

/// Fixed held-out latents and draws for one subject.
struct HeldoutSet {
  std::vector<Tensor> latents;
  std::vector<NoiseDraw> draws;
};

HeldoutSet make_heldout(const EncoderParams& encoder, const SubjectData& data, const WorldConfig& world,
                        std::uint64_t seed);

/// Fine-tunes `base` on `train` under prompt c (latents sampled with `mode`)
/// and returns the held-out loss under c. The training stream depends only on
/// `seed`, so calls that differ only in data are paired.
double finetune_heldout_loss(const DenoiserParams& base, const EncoderParams& encoder,
                             const std::vector<Tensor>& train, PromptId c, const HeldoutSet& heldout,
                             const WorldConfig& world, const SigmaMode& mode, std::uint64_t seed);

enum class Defense { none, random_noise, fsgm, aspl, pid };
std::string_view defense_name(Defense d);
Defense parse_defense(std::string_view name);

struct ExperimentConfig {
  WorldConfig world;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  /// Encoder-only PGD (loss add-log by default).
  AttackConfig pid;
  /// PGD settings for FSGM; the loss kind selects plain or combo.
  AttackConfig fsgm;
  /// Step size, budget and seed for ASPL; iterations come from `aspl_schedule`.
  AttackConfig aspl;
  AsplSchedule aspl_schedule;
  /// Surrogate training steps for FSGM (0 keeps the base model).
  std::size_t surrogate_steps = 200;
  PromptId c_prot{0};
  std::vector<PromptId> c_explo{{0}, {1}, {2}, {3}};
  std::vector<Defense> defenses{Defense::none, Defense::fsgm, Defense::aspl, Defense::pid};
  std::vector<SigmaMode> sigma_modes;
  std::vector<CorruptionSpec> corruptions;
  /// Worker threads for independent seeds.
  std::size_t jobs = 1;

  ExperimentConfig();
  void validate() const;
  /// Stable key=value rendering of every field; the config hash covers it.
  std::string canonical() const;
  std::uint64_t hash() const;
};

struct ExperimentRow {
  std::string experiment;
  std::string defense;
  std::string condition;
  std::uint64_t seed = 0;
  double loss_clean_trained = 0.0;
  double loss_protected_trained = 0.0;
  ShiftStats shift;
  double ssim = 1.0;
  double psnr = kPsnrCap;
  std::uint64_t config_hash = 0;

  double gap() const { return loss_protected_trained - loss_clean_trained; }
};

struct ExperimentReport {
  std::string experiment;
  std::uint64_t config_hash = 0;
  std::vector<ExperimentRow> rows;
  /// Free-form aggregate facts (e.g. sigma floor occurrence rate).
  std::vector<std::pair<std::string, double>> notes;
};

/// Protects `images` with one defense. Seeds the attack from `seed`.
std::vector<Tensor> protect_images(Defense d, const EncoderParams& encoder, const std::vector<Tensor>& images,
                                   const DenoiserParams& base, const ExperimentConfig& cfg, std::uint64_t seed);

/// Rows: defenses x c_explo x seeds. Condition label "c_prot=<p>;c_explo=<e>".
ExperimentReport run_mismatch_experiment(const EncoderParams& encoder, const ExperimentConfig& cfg);
/// PID-protected data fine-tuned with latents drawn under each sigma mode.
/// Rows: sigma_modes x seeds. The clean reference is trained under the same mode.
ExperimentReport run_adaptive_experiment(const EncoderParams& encoder, const ExperimentConfig& cfg);
/// PID-protected data passed through each corruption before fine-tuning.
/// Rows: (corruptions + uncorrupted) x seeds.
ExperimentReport run_corruption_experiment(const EncoderParams& encoder, const ExperimentConfig& cfg);

/// Per-seed protection gaps at c_explo == c_prot and averaged over the others.
struct MismatchGap {
  std::string defense;
  std::uint64_t seed = 0;
  double matched = 0.0;
  double mismatched = 0.0;
  /// 1 - mismatched / matched; NaN unless matched > 0.
  double relative_shrink = 0.0;
};
std::vector<MismatchGap> mismatch_gaps(const ExperimentReport& report, PromptId c_prot);

inline constexpr const char* kReportCsvHeader =
    "experiment,defense,condition,seed,loss_clean_trained,loss_protected_trained,mu_shift,sigma_shift,"
    "logvar_gap,ssim,psnr,config_hash";

std::string report_csv(const ExperimentReport& report);
/// Aggregate means per (defense, condition) plus notes, as JSON.
std::string report_summary_json(const ExperimentReport& report);
void write_report(const ExperimentReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path);

/// FNV-1a 64 of a string.
std::uint64_t fnv1a(const std::string& text);
std::string hex64(std::uint64_t v);

}  // namespace lshield
