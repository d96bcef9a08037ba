#include <gtest/gtest.h>

#include <cmath>

#include "latent_shield/grad_check.hpp"
#include "latent_shield/losses.hpp"

using namespace lshield;

namespace {

Tensor random_image(std::uint64_t seed, std::size_t h, std::size_t w, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  return rng.uniform_tensor({3, h, w}, lo, hi);
}

// Latent handles holding the cached clean statistics, optionally shifted.
LatentVar clean_latent(Tape& tape, const CleanLatentCache& cache, double logvar_shift = 0.0) {
  Tensor lv = cache.logvar0();
  for (double& v : lv.data()) v += logvar_shift;
  return {tape.leaf(cache.mu0()), tape.leaf(lv)};
}

LossSpec spec_of(LossKind kind) {
  LossSpec s;
  s.kind = kind;
  return s;
}

double cosine(const Tensor& a, const Tensor& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

class LossAtClean : public ::testing::Test {
 protected:
  EncoderParams enc = init_encoder(4, EncoderPreset::tiny8x);
  Tensor x = random_image(5, 16, 16);
  CleanLatentCache cache{enc, x};
};

TEST_F(LossAtClean, ZeroPerturbationIsExactlyZero) {
  Tape tape;
  LatentVar z = encode(tape, enc, tape.leaf(x));
  EXPECT_EQ(loss_mean(cache, z).value().item(), 0.0);
  EXPECT_EQ(loss_var(cache, z).value().item(), 0.0);
  EXPECT_EQ(loss_add(cache, z).value().item(), 0.0);
  EXPECT_EQ(loss_add_log(cache, z).value().item(), 0.0);
  EXPECT_EQ(loss_add_log(cache, z, LogReduction::mean).value().item(), 0.0);
  Rng rng(1);
  const Tensor eps = rng.normal_tensor(cache.mu0().shape());
  EXPECT_EQ(loss_sample(cache, z, eps, eps).value().item(), 0.0);
}

TEST_F(LossAtClean, DoubledSigmaGivesSigmaEnergy) {
  Tape tape;
  const double v = loss_var(cache, clean_latent(tape, cache, 2.0 * std::log(2.0))).value().item();
  double expected = 0.0;
  for (double s : cache.sigma0().data()) expected += s * s;
  EXPECT_NEAR(v, expected, 1e-12 * expected);
}

TEST_F(LossAtClean, UnitLogvarShiftGivesNumel) {
  Tape tape;
  const LatentVar z = clean_latent(tape, cache, 1.0);
  const double n = static_cast<double>(cache.mu0().size());
  EXPECT_NEAR(loss_add_log(cache, z).value().item(), n, 1e-9);
  EXPECT_NEAR(loss_add_log(cache, z, LogReduction::mean).value().item(), 1.0, 1e-12);
}

TEST_F(LossAtClean, SampleLossExpectationIsTwiceVarianceSum) {
  Rng rng(2024);
  double total = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    Tape tape;
    total += loss_sample(cache, clean_latent(tape, cache), rng).value().item();
  }
  double expected = 0.0;
  for (double s : cache.sigma0().data()) expected += 2.0 * s * s;
  EXPECT_NEAR(total / draws, expected, 0.03 * expected);
}

TEST_F(LossAtClean, SampleLossSeededIsDeterministic) {
  auto eval = [&](std::uint64_t seed) {
    Rng rng(seed);
    Tape tape;
    return loss_sample(cache, encode(tape, enc, tape.leaf(x)), rng).value().item();
  };
  EXPECT_EQ(eval(3), eval(3));
}

TEST_F(LossAtClean, ShapeMismatchRejected) {
  Tape tape;
  LatentVar z = encode(tape, enc, tape.leaf(random_image(1, 8, 8)));
  EXPECT_THROW(loss_mean(cache, z), ShapeError);
}

TEST(LossMean, LinearEncoderClosedForm) {
  // One 4x4 patch -> 3 latent values, so mu = W x + b with W of size 3 x 48.
  Rng rng(7);
  const Tensor w_mu = rng.normal_tensor({3, 3, 4, 4});
  const EncoderParams lin =
      make_linear_encoder(w_mu, rng.normal_tensor({3}), rng.normal_tensor({3, 3, 4, 4}), rng.normal_tensor({3}));
  const Tensor x = random_image(8, 4, 4, 0.2, 0.8);
  const Tensor delta = rng.uniform_tensor({3, 4, 4}, -0.05, 0.05);
  const CleanLatentCache cache(lin, x);
  Tape tape;
  const double got = loss_mean(cache, encode(tape, lin, tape.leaf(x + delta))).value().item();
  double expected = 0.0;
  for (std::size_t l = 0; l < 3; ++l) {
    double wd = 0.0;
    for (std::size_t k = 0; k < 48; ++k) wd += w_mu[l * 48 + k] * delta[k];
    expected += wd * wd;
  }
  EXPECT_NEAR(got, expected, 1e-12 * std::max(1.0, expected));
}

TEST(LossMean, LinearEncoderGradientCheck) {
  Rng rng(9);
  const EncoderParams lin = make_linear_encoder(rng.normal_tensor({2, 3, 2, 2}), rng.normal_tensor({2}),
                                                rng.normal_tensor({2, 3, 2, 2}), rng.normal_tensor({2}));
  const Tensor x = random_image(10, 4, 4, 0.2, 0.8);
  const Objective obj = make_latent_objective(lin, x, spec_of(LossKind::mean));
  auto f = [&](Tape& tape, Var xp) {
    Rng unused(0);
    return obj(tape, xp, unused).loss;
  };
  const GradCheckReport r = grad_check(f, x + 0.03 * rng.uniform_tensor({3, 4, 4}, -1.0, 1.0), 1e-5, 1e-5);
  EXPECT_TRUE(r.pass) << r.rel_err;
}

TEST(LossAddLog, TinyImageGradientCheck) {
  const EncoderParams enc = init_encoder(2, EncoderPreset::tiny8x);
  const Tensor x = random_image(11, 8, 8, 0.1, 0.9);
  const Objective obj = make_latent_objective(enc, x, spec_of(LossKind::add_log));
  Rng rng(12);
  auto f = [&](Tape& tape, Var xp) {
    Rng unused(0);
    return obj(tape, xp, unused).loss;
  };
  const GradCheckReport r = grad_check(f, x + 0.02 * rng.uniform_tensor({3, 8, 8}, -1.0, 1.0), 1e-4, 1e-4);
  EXPECT_TRUE(r.pass) << r.rel_err;
}

TEST(LossTargeted, AtTargetIsZeroMaximum) {
  const EncoderParams enc = init_encoder(2, EncoderPreset::micro4x);
  const Tensor target = checkerboard_target({3, 8, 8});
  LossSpec spec = spec_of(LossKind::mean_targeted);
  spec.target = target;
  const Objective obj = make_latent_objective(enc, random_image(3, 8, 8), spec);
  Rng rng(0);
  Tape tape;
  EXPECT_EQ(obj(tape, tape.leaf(target), rng).loss.value().item(), 0.0);
  EXPECT_LT(obj(tape, tape.leaf(random_image(4, 8, 8)), rng).loss.value().item(), 0.0);
}

TEST(LossTargeted, DimensionMismatchRejected) {
  const EncoderParams enc = init_encoder(2, EncoderPreset::micro4x);
  LossSpec spec = spec_of(LossKind::mean_targeted);
  spec.target = checkerboard_target({3, 4, 4});
  EXPECT_THROW(make_latent_objective(enc, random_image(3, 8, 8), spec), ShapeError);
}

TEST(LossCombo, ZeroLambdaIsSurrogateAlone) {
  Tape tape;
  Var t = tape.leaf(Tensor({1}, 2.5));
  Var l = tape.leaf(Tensor({1}, 7.0));
  EXPECT_EQ(loss_combo(t, l, 0.0).value().item(), 2.5);
  EXPECT_EQ(loss_combo(t, l, 0.05).value().item(), 2.5 + 0.05 * 7.0);
  EXPECT_THROW(loss_combo(t, l, -1.0), std::invalid_argument);
}

TEST(LossCombo, LargeLambdaFollowsLatentGradient) {
  const EncoderParams enc = init_encoder(3, EncoderPreset::micro4x);
  DenoiserShape shape;
  shape.latent_channels = 2;
  shape.hidden = 8;
  const DenoiserParams den = init_denoiser(4, shape);
  const NoiseSchedule sched = make_schedule(100, 1e-3, 2e-2);
  const Tensor x = random_image(6, 16, 16, 0.1, 0.9);
  Rng prng(5);
  const Tensor xp = x + 0.02 * prng.uniform_tensor(x.shape(), -1.0, 1.0);

  auto grad_of = [&](const Objective& obj) {
    Rng rng(77);
    Tape tape;
    Var leaf = tape.leaf(xp);
    tape.backward(obj(tape, leaf, rng).loss);
    return tape.grad(leaf);
  };
  const Tensor g_combo = grad_of(make_denoiser_objective(enc, x, den, sched, PromptId{0}, 1e6));
  const Tensor g_latent = grad_of(make_latent_objective(enc, x, spec_of(LossKind::add_log)));
  EXPECT_GT(cosine(g_combo, g_latent), 0.999);
}

TEST(LossKindNames, RoundTrip) {
  for (const char* n : {"mean", "var", "sample", "add", "add-log", "mean-target", "combo-fsgm", "combo-aspl"}) {
    EXPECT_EQ(loss_kind_name(parse_loss_kind(n)), n);
  }
  EXPECT_THROW(parse_loss_kind("median"), std::invalid_argument);
  EXPECT_TRUE(needs_denoiser(LossKind::combo_aspl));
  EXPECT_FALSE(needs_denoiser(LossKind::add_log));
}

TEST(CleanCache, RefreshOnlyOnChange) {
  const EncoderParams enc = init_encoder(1, EncoderPreset::micro4x);
  const Tensor x = random_image(1, 8, 8);
  CleanLatentCache cache;
  EXPECT_TRUE(cache.refresh(enc, x));
  EXPECT_FALSE(cache.refresh(enc, x));
  EXPECT_TRUE(cache.refresh(enc, random_image(2, 8, 8)));
  EXPECT_TRUE(cache.refresh(init_encoder(2, EncoderPreset::micro4x), random_image(2, 8, 8)));
}
