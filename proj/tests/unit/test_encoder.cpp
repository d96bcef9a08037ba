#include <gtest/gtest.h>

#include <cmath>

#include "latent_shield/container.hpp"
#include "latent_shield/encoder.hpp"
#include "latent_shield/rng.hpp"

using namespace lshield;

namespace {

Tensor random_image(std::uint64_t seed, std::size_t h, std::size_t w) {
  Rng rng(seed);
  return rng.uniform_tensor({3, h, w}, 0.0, 1.0);
}

}  // namespace

TEST(Encoder, InitIsBitReproducible) {
  const auto a = serialize_encoder(init_encoder(7, EncoderPreset::tiny8x));
  const auto b = serialize_encoder(init_encoder(7, EncoderPreset::tiny8x));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, serialize_encoder(init_encoder(8, EncoderPreset::tiny8x)));
}

TEST(Encoder, LatentShapes) {
  const EncoderParams tiny = init_encoder(1, EncoderPreset::tiny8x);
  EXPECT_EQ(tiny.latent_shape({3, 64, 64}), (Shape{4, 8, 8}));
  EXPECT_EQ(encode(tiny, random_image(1, 64, 64)).mu.shape(), (Shape{4, 8, 8}));

  const EncoderParams micro = init_encoder(1, EncoderPreset::micro4x);
  EXPECT_EQ(encode(micro, random_image(2, 16, 16)).logvar.shape(), (Shape{2, 4, 4}));
}

TEST(Encoder, UnknownPresetRejected) {
  EXPECT_THROW(parse_preset("huge-2x"), std::invalid_argument);
  EXPECT_EQ(parse_preset("micro-4x"), EncoderPreset::micro4x);
}

TEST(Encoder, IndivisibleSizeNamesMultiple) {
  const EncoderParams tiny = init_encoder(1, EncoderPreset::tiny8x);
  try {
    encode(tiny, random_image(1, 20, 16));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("multiples of 8"), std::string::npos) << e.what();
  }
}

TEST(Encoder, OutOfRangeImageRejected) {
  const EncoderParams micro = init_encoder(1, EncoderPreset::micro4x);
  Tensor x = random_image(1, 8, 8);
  x[3] = 1.01;
  EXPECT_THROW(encode(micro, x), std::invalid_argument);
}

TEST(Encoder, EncodeIsDeterministic) {
  const EncoderParams tiny = init_encoder(3, EncoderPreset::tiny8x);
  const Tensor x = random_image(4, 32, 32);
  const LatentDistribution a = encode(tiny, x);
  const LatentDistribution b = encode(tiny, x);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.logvar, b.logvar);
}

TEST(Encoder, MeanIsContinuous) {
  const EncoderParams tiny = init_encoder(3, EncoderPreset::tiny8x);
  Rng rng(5);
  const Tensor x = rng.uniform_tensor({3, 16, 16}, 0.2, 0.8);
  const Tensor dir = rng.uniform_tensor({3, 16, 16}, -1.0, 1.0);
  const Tensor mu0 = encode(tiny, x).mu;
  double prev = INFINITY;
  for (double scale : {1e-2, 1e-4, 1e-6}) {
    const double d = std::sqrt(sum_squared_diff(encode(tiny, x + scale * dir).mu, mu0));
    EXPECT_LT(d, prev);
    // Locally linear: the change scales with the step.
    EXPECT_LT(d / scale, 1e3);
    prev = d;
  }
  EXPECT_LT(prev, 1e-4);
}

TEST(Encoder, LinearEncoderMatchesMatrixProduct) {
  Rng rng(6);
  const Tensor w_mu = rng.normal_tensor({2, 3, 2, 2});
  const Tensor b_mu = rng.normal_tensor({2});
  const Tensor w_lv = rng.normal_tensor({2, 3, 2, 2});
  const Tensor b_lv = rng.normal_tensor({2});
  const EncoderParams lin = make_linear_encoder(w_mu, b_mu, w_lv, b_lv);
  const Tensor x = random_image(7, 4, 2);
  const LatentDistribution d = encode(lin, x);
  ASSERT_EQ(d.mu.shape(), (Shape{2, 2, 1}));
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t py = 0; py < 2; ++py) {
      double mu = b_mu[l], lv = b_lv[l];
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < 2; ++i) {
          for (std::size_t j = 0; j < 2; ++j) {
            const std::size_t wi = ((l * 3 + c) * 2 + i) * 2 + j;
            mu += w_mu[wi] * x.at(c, py * 2 + i, j);
            lv += w_lv[wi] * x.at(c, py * 2 + i, j);
          }
        }
      }
      EXPECT_NEAR(d.mu.at(l, py, 0), mu, 1e-12);
      EXPECT_NEAR(d.logvar.at(l, py, 0), lv, 1e-12);
    }
  }
}

TEST(Sample, ZeroNoiseGivesMean) {
  const EncoderParams tiny = init_encoder(2, EncoderPreset::tiny8x);
  const LatentDistribution d = encode(tiny, random_image(3, 16, 16));
  EXPECT_EQ(sample(d, Tensor(d.mu.shape(), 0.0)), d.mu);
}

TEST(Sample, UnitSigmaAddsNoise) {
  Rng rng(4);
  LatentDistribution d{rng.normal_tensor({2, 3, 3}), Tensor({2, 3, 3}, 0.0)};
  const Tensor n = rng.normal_tensor({2, 3, 3});
  EXPECT_EQ(sample(d, n), d.mu + n);
}

TEST(Sample, ShapeMismatchRejected) {
  LatentDistribution d{Tensor({2, 2, 2}), Tensor({2, 2, 2})};
  EXPECT_THROW(sample(d, Tensor({2, 2, 3})), ShapeError);
}

TEST(SigmaMode, ZeroModeSamplesTheMean) {
  Rng rng(9);
  LatentDistribution d{rng.normal_tensor({4, 2, 2}), rng.normal_tensor({4, 2, 2})};
  const ResolvedLatent r = apply_sigma_mode(d, SigmaMode::zero());
  EXPECT_EQ(r.mu, d.mu);
  EXPECT_EQ(sample(r, rng.normal_tensor({4, 2, 2})), d.mu);
}

TEST(SigmaMode, ClipAboveCeilingIsUniform) {
  LatentDistribution d{Tensor({3}, 0.5), Tensor({3}, std::vector<double>{-2.0, 0.0, 1.0})};
  const ResolvedLatent clipped = apply_sigma_mode(d, SigmaMode::clipped(1e-7));
  const ResolvedLatent fixed = apply_sigma_mode(d, SigmaMode::fixed(1e-7));
  for (double s : clipped.sigma.data()) EXPECT_EQ(s, 1e-7);
  EXPECT_EQ(clipped.sigma, fixed.sigma);
}

TEST(SigmaMode, NaturalIsIdentity) {
  Rng rng(10);
  LatentDistribution d{rng.normal_tensor({2, 2, 2}), rng.normal_tensor({2, 2, 2})};
  const ResolvedLatent r = apply_sigma_mode(d, SigmaMode::natural());
  EXPECT_EQ(r.mu, d.mu);
  EXPECT_EQ(r.sigma, d.sigma());
  const Tensor n = rng.normal_tensor({2, 2, 2});
  EXPECT_EQ(sample(r, n), sample(d, n));
}

TEST(SigmaMode, Parse) {
  EXPECT_EQ(parse_sigma_mode("zero"), SigmaMode::zero());
  EXPECT_EQ(parse_sigma_mode("clipped:1e-7"), SigmaMode::clipped(1e-7));
  EXPECT_EQ(parse_sigma_mode("fixed:0.5"), SigmaMode::fixed(0.5));
  EXPECT_THROW(parse_sigma_mode("clipped"), std::invalid_argument);
  EXPECT_THROW(parse_sigma_mode("loud"), std::invalid_argument);
}

TEST(Container, EncoderRoundTrip) {
  const EncoderParams p = init_encoder(11, EncoderPreset::micro4x);
  const EncoderParams q = deserialize_encoder(serialize_encoder(p));
  EXPECT_EQ(serialize_encoder(q), serialize_encoder(p));
  EXPECT_EQ(q.version_tag, p.version_tag);
}

TEST(Container, CorruptBytesRejected) {
  auto bytes = serialize_encoder(init_encoder(11, EncoderPreset::micro4x));
  bytes.resize(bytes.size() / 2);
  EXPECT_THROW(deserialize_encoder(bytes), FormatError);
  EXPECT_THROW(deserialize_encoder({'n', 'o', 'p', 'e'}), FormatError);
}
