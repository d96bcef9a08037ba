#pragma once

// Finite-difference check of every protection loss with respect to the input
// image. Shared by the gradcheck command and the test suite.

#include <cstdint>
#include <string>
#include <vector>

#include "latent_shield/encoder.hpp"
#include "latent_shield/grad_check.hpp"

namespace lshield {

struct SuiteEntry {
  std::string loss;
  GradCheckReport report;
};

/// Losses covered, in report order.
const std::vector<std::string>& gradient_suite_losses();

/// Checks each loss at a random point x + delta (|delta| <= 0.02) of a random
/// 16x16 image drawn from `seed`; the denoiser terms use a fresh denoiser and
/// frozen noise from the same seed. Pixels stay inside [h, 1 - h].
std::vector<SuiteEntry> run_gradient_suite(const EncoderParams& encoder, std::uint64_t seed, double tol,
                                           double h = 1e-4);

}  // namespace lshield
