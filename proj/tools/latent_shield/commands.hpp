#pragma once

// Command implementations behind the latent_shield executable. Each returns a
// process exit code; ConfigError is caught by the caller and mapped to 2.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "config.hpp"
#include "latent_shield/encoder.hpp"
#include "latent_shield/robustness.hpp"

namespace lshield::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitConfig = 2;

/// LATENT_SHIELD_SEED, if set. A malformed value is a ConfigError.
std::optional<std::uint64_t> env_seed();

RunConfig protect_defaults();
RunConfig stats_defaults();
RunConfig experiment_defaults();
RunConfig gradcheck_defaults();
RunConfig init_weights_defaults();

/// encoder.weights when set, otherwise init_encoder(encoder.seed, encoder.preset).
EncoderParams load_or_init_encoder(const RunConfig& cfg);
AttackConfig attack_config(const RunConfig& cfg);
ExperimentConfig experiment_config(const RunConfig& cfg);

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

/// One protected PNG and one trajectory CSV per input PNG, plus manifest.json.
int cmd_protect(RunConfig cfg, const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                Streams io);
/// stats.csv with one row per matching file name; optional per-pair SVG.
int cmd_stats(const RunConfig& cfg, const std::filesystem::path& clean_dir, const std::filesystem::path& pert_dir,
              const std::filesystem::path& out_dir, Streams io);
/// <kind>.csv, <kind>_summary.json and <kind>_config.txt in out_dir.
int cmd_experiment(const std::string& kind, const RunConfig& cfg, const std::filesystem::path& out_dir, Streams io);
/// Gradient suite over every loss; 0 iff all pass.
int cmd_gradcheck(const RunConfig& cfg, Streams io);
/// Writes fresh encoder weights, or a pretrained toy denoiser.
int cmd_init_weights(const RunConfig& cfg, const std::filesystem::path& out, Streams io);

}  // namespace lshield::cli
