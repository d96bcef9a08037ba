#include <benchmark/benchmark.h>

#include "latent_shield/attack.hpp"
#include "latent_shield/diffusion.hpp"
#include "latent_shield/imaging.hpp"

using namespace lshield;

namespace {

Tensor natural(std::size_t side) {
  Rng rng(1);
  return synthetic_natural_image(rng, side, side);
}

}  // namespace

// 3x3 conv, forward plus backward, batch 1.
static void BM_Conv2dForwardBackward(benchmark::State& state) {
  const std::size_t side = static_cast<std::size_t>(state.range(0));
  const std::size_t ch = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  const Tensor input = rng.normal_tensor({1, ch, side, side});
  const Tensor kernel = rng.normal_tensor({ch, ch, 3, 3});
  const Tensor bias = rng.normal_tensor({ch});
  for (auto _ : state) {
    Tape tape;
    Var x = tape.leaf(input), k = tape.leaf(kernel), b = tape.leaf(bias);
    tape.backward(sum(conv2d(x, k, b, {1, 1})));
    benchmark::DoNotOptimize(tape.grad(k));
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({32, 8})->Args({64, 8})->Args({32, 16});

static void BM_Encode(benchmark::State& state) {
  const EncoderParams enc = init_encoder(1, EncoderPreset::tiny8x);
  const Tensor x = natural(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(encode(enc, x));
}
BENCHMARK(BM_Encode)->Arg(32)->Arg(64);

// Cost per PGD step on add-log, the default protection loss.
static void BM_PgdAddLogStep(benchmark::State& state) {
  const EncoderParams enc = init_encoder(1, EncoderPreset::tiny8x);
  const Tensor x = natural(static_cast<std::size_t>(state.range(0)));
  AttackConfig cfg;
  cfg.iterations = 10;
  cfg.quantize = QuantizeMode::none;
  for (auto _ : state) benchmark::DoNotOptimize(pgd_protect(enc, x, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.iterations));
}
BENCHMARK(BM_PgdAddLogStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_DenoiserTrainStep(benchmark::State& state) {
  const EncoderParams enc = init_encoder(1, EncoderPreset::tiny8x);
  DenoiserShape shape;
  shape.latent_channels = enc.latent_channels();
  const DenoiserParams init = init_denoiser(1, shape);
  const NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
  std::vector<LatentSample> data;
  for (std::uint32_t i = 0; i < 6; ++i) data.push_back({encode(enc, natural(32)), PromptId{i % 4}});
  TrainOptions opts;
  opts.steps = 5;
  for (auto _ : state) {
    Rng rng(3);
    benchmark::DoNotOptimize(train_denoiser(init, data, sched, opts, rng));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(opts.steps));
}
BENCHMARK(BM_DenoiserTrainStep)->Unit(benchmark::kMillisecond);

static void BM_Ssim(benchmark::State& state) {
  const Tensor x = natural(64);
  Rng rng(4);
  const Tensor y = clamp(x + rng.uniform_tensor(x.shape(), -0.03, 0.03), 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(x, y));
}
BENCHMARK(BM_Ssim);
BENCHMARK_MAIN();
