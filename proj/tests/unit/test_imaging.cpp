#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "latent_shield/image_io.hpp"
#include "latent_shield/imaging.hpp"

using namespace lshield;

namespace {

Tensor natural(std::uint64_t seed, std::size_t side = 32) {
  Rng rng(seed);
  return synthetic_natural_image(rng, side, side);
}

void expect_unit_range(const Tensor& t) {
  for (double v : t.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

}  // namespace

TEST(Corrupt, ZeroAmplitudeNoiseIsIdentity) {
  const Tensor x = natural(1);
  EXPECT_EQ(corrupt(x, CorruptionSpec::smooth_uniform(0.0, 4)), x);
}

TEST(Corrupt, FullScaleCropIsIdentity) {
  const Tensor x = natural(2);
  EXPECT_LT(max_abs_diff(corrupt(x, CorruptionSpec::resize_crop(1.0, 1.0, 3)), x), 1e-6);
}

TEST(Corrupt, GaussianKernelNormalized) {
  const std::vector<double> k = gaussian_kernel(1.0);
  ASSERT_EQ(k.size(), 7u);
  double total = 0.0;
  for (double v : k) total += v;
  EXPECT_NEAR(total, 1.0, 1e-9);

  // Impulse response of the separable blur is the outer product of the taps.
  Tensor impulse({3, 15, 15}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) impulse.at(c, 7, 7) = 1.0;
  const Tensor blurred = corrupt(impulse, CorruptionSpec::gaussian_denoise(1.0));
  double mass = 0.0;
  for (std::size_t y = 0; y < 15; ++y)
    for (std::size_t x = 0; x < 15; ++x) mass += blurred.at(0, y, x);
  EXPECT_NEAR(mass, 1.0, 1e-9);
  EXPECT_NEAR(blurred.at(1, 7, 8), k[3] * k[4], 1e-15);
}

TEST(Corrupt, OutputsStayInUnitRange) {
  const Tensor x = natural(3);
  expect_unit_range(corrupt(x, CorruptionSpec::resize_crop(0.5, 0.9, 1)));
  expect_unit_range(corrupt(x, CorruptionSpec::smooth_uniform(0.3, 2)));
  expect_unit_range(corrupt(x, CorruptionSpec::gaussian_denoise(2.0)));
  expect_unit_range(corrupt(x, CorruptionSpec::jpeg(20)));
}

TEST(Corrupt, InvalidParametersRejected) {
  const Tensor x = natural(4);
  EXPECT_THROW(corrupt(x, CorruptionSpec::resize_crop(0.0, 1.0)), std::invalid_argument);
  EXPECT_THROW(corrupt(x, CorruptionSpec::smooth_uniform(-0.1)), std::invalid_argument);
  EXPECT_THROW(corrupt(x, CorruptionSpec::gaussian_denoise(0.0)), std::invalid_argument);
  EXPECT_THROW(corrupt(x, CorruptionSpec::jpeg(0)), std::invalid_argument);
}

TEST(Ssim, IdentityIsExactlyOne) {
  const Tensor x = natural(5);
  EXPECT_EQ(ssim(x, x), 1.0);
}

TEST(Ssim, Symmetric) {
  Rng rng(6);
  const Tensor x = natural(6);
  const Tensor y = clamp(x + rng.uniform_tensor(x.shape(), -0.1, 0.1), 0.0, 1.0);
  EXPECT_NEAR(ssim(x, y), ssim(y, x), 1e-12);
}

TEST(Ssim, InvertedTestCardIsNegative) {
  Tensor card({3, 24, 24});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 24; ++y)
      for (std::size_t x = 0; x < 24; ++x) card.at(c, y, x) = ((x / 3 + y / 3) % 2) ? 1.0 : 0.0;
  Tensor inv = card;
  for (double& v : inv.data()) v = 1.0 - v;
  EXPECT_LT(ssim(card, inv), 0.0);
}

TEST(Ssim, SmallNoiseStaysInBand) {
  Rng rng(7);
  const Tensor x = natural(7, 64);
  const double eps = 8.0 / 255.0;
  const Tensor y = clamp(x + rng.uniform_tensor(x.shape(), -eps, eps), 0.0, 1.0);
  const double s = ssim(x, y);
  EXPECT_GT(s, 0.7);
  EXPECT_LT(s, 1.0);
}

TEST(Ssim, RejectsSmallOrMismatchedImages) {
  EXPECT_THROW(ssim(Tensor({3, 8, 8}), Tensor({3, 8, 8})), ShapeError);
  EXPECT_THROW(ssim(Tensor({3, 16, 16}), Tensor({3, 16, 12})), ShapeError);
}

TEST(Psnr, ClosedForms) {
  const Tensor x(Shape{3, 16, 16}, 0.5);
  EXPECT_TRUE(std::isinf(psnr(x, x)));
  EXPECT_EQ(psnr_capped(x, x), kPsnrCap);

  Tensor y = x;
  for (double& v : y.data()) v += 1.0 / 255.0;
  EXPECT_NEAR(psnr(x, y), 20.0 * std::log10(255.0), 1e-9);
  EXPECT_NEAR(psnr(x, y), 48.13, 0.01);
  EXPECT_EQ(psnr(x, y), psnr(y, x));
}

TEST(Psnr, WorstCaseBudgetLowerBound) {
  Rng rng(8);
  const Tensor x = rng.uniform_tensor({3, 16, 16}, 0.1, 0.9);
  Tensor y = x;
  for (double& v : y.data()) v += rng.uniform() < 0.5 ? -0.05 : 0.05;
  EXPECT_GE(psnr(x, y), 10.0 * std::log10(1.0 / (0.05 * 0.05)) - 1e-9);
}

TEST(ImageIo, PngRoundTripIsByteExact) {
  const Tensor x = natural(9, 16);
  const Tensor q = decode_png(encode_png(x));
  EXPECT_LE(max_abs_diff(q, x), 1.0 / 510.0);
  EXPECT_EQ(encode_png(q), encode_png(x));

  const auto path = std::filesystem::temp_directory_path() / "lshield_io_test.png";
  write_png(path, x);
  EXPECT_EQ(read_png(path), q);
  std::filesystem::remove(path);
}

TEST(ImageIo, GarbageRejected) {
  EXPECT_THROW(decode_png({1, 2, 3, 4}), ImageIoError);
  EXPECT_THROW(decode_jpeg({1, 2, 3, 4}), ImageIoError);
  EXPECT_THROW(read_png("/nonexistent/nope.png"), ImageIoError);
}

TEST(ImageIo, JpegKeepsShape) {
  const Tensor x = natural(10, 24);
  const Tensor j = decode_jpeg(encode_jpeg(x, 90));
  EXPECT_EQ(j.shape(), x.shape());
  EXPECT_LT(max_abs_diff(j, x), 0.2);
}

TEST(Synthetic, SubjectImagesAreSeeded) {
  Rng a(11), b(11);
  const SubjectStyle sa = random_subject(a), sb = random_subject(b);
  EXPECT_EQ(synthetic_subject_image(sa, a, 32, 32), synthetic_subject_image(sb, b, 32, 32));
  expect_unit_range(synthetic_subject_image(sa, a, 32, 32));
}
