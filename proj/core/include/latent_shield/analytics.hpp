#pragma once

// Latent-shift statistics and per-iteration attack trajectories.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "latent_shield/encoder.hpp"

namespace lshield {

struct ShiftStats {
  double mu_shift_l2sq = 0.0;
  double sigma_shift_l2sq = 0.0;
  /// Mean of (logvar_pert - logvar_clean) over elements; signed.
  double logvar_gap_mean = 0.0;
};

ShiftStats latent_shift(const LatentDistribution& clean, const LatentDistribution& pert);
/// For sigma-substituted latents. Elements whose sigmas are equal (including
/// both zero) contribute no logvar gap.
ShiftStats latent_shift(const ResolvedLatent& clean, const ResolvedLatent& pert);
ShiftStats latent_shift(const EncoderParams& encoder, const Tensor& x, const Tensor& x_pert);

struct TrajectoryRecord {
  std::size_t iter = 0;
  double loss = 0.0;
  double mu_shift = 0.0;
  double sigma_shift = 0.0;
  double logvar_gap = 0.0;
  double delta_linf = 0.0;

  bool operator==(const TrajectoryRecord&) const = default;
};

struct Trajectory {
  std::vector<TrajectoryRecord> steps;
  /// Latent element count, used to plot per-element means.
  std::size_t latent_numel = 0;

  /// Throws std::invalid_argument unless iter exceeds the last record's.
  void append(const TrajectoryRecord& r);
  bool empty() const noexcept { return steps.empty(); }
};

inline constexpr const char* kTrajectoryCsvHeader = "iter,loss,mu_shift,sigma_shift,logvar_gap,delta_linf";

std::string trajectory_csv(const Trajectory& traj);
void export_trajectory(const Trajectory& traj, const std::filesystem::path& csv_path);
Trajectory parse_trajectory_csv(const std::string& text);
Trajectory read_trajectory(const std::filesystem::path& csv_path);

/// Log-scale line plot, one polyline per column (absolute values; non-positive
/// points are dropped). Shift columns are divided by latent_numel when set.
std::string trajectory_svg(const Trajectory& traj, const std::string& title = "");
void export_trajectory_svg(const Trajectory& traj, const std::filesystem::path& svg_path,
                           const std::string& title = "");

/// Writes text to path; failures name the path.
/// Per-channel bar chart of one clean/perturbed pair: mean squared mu shift
/// and mean logvar gap per latent channel. Latents are (L, h, w).
std::string shift_svg(const LatentDistribution& clean, const LatentDistribution& pert,
                      const std::string& title = "");

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace lshield
