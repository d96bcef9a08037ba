#include "latent_shield/gradient_suite.hpp"

#include <memory>

#include "latent_shield/diffusion.hpp"
#include "latent_shield/losses.hpp"

namespace lshield {

const std::vector<std::string>& gradient_suite_losses() {
  static const std::vector<std::string> names{"mean", "var", "sample", "add", "add-log", "mean-target",
                                              "uncond", "cond"};
  return names;
}

std::vector<SuiteEntry> run_gradient_suite(const EncoderParams& encoder, std::uint64_t seed, double tol,
                                           double h) {
  Rng rng(seed);
  const std::size_t side = 16;
  const std::size_t c = encoder.in_channels();
  Tensor x_clean = rng.uniform_tensor({c, side, side}, 0.1, 0.9);
  Tensor x = x_clean;
  for (double& v : x.data()) v += rng.uniform(-0.02, 0.02);

  DenoiserShape shape;
  shape.latent_channels = encoder.latent_channels();
  shape.hidden = 8;
  const DenoiserParams denoiser = init_denoiser(rng.next_u64(), shape);
  const NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
  const Shape latent = encoder.latent_shape(x.shape());
  const Tensor z_noise = rng.normal_tensor(latent);
  const std::uint64_t draw_seed = rng.next_u64();

  std::vector<SuiteEntry> out;
  for (const std::string& name : gradient_suite_losses()) {
    ScalarFn f;
    if (name == "uncond" || name == "cond") {
      const bool cond = name == "cond";
      f = [&, cond](Tape& tape, Var xv) {
        BoundDenoiser net = bind(tape, denoiser, false);
        Var z = sample(encode(tape, encoder, xv), z_noise);
        Rng draw(draw_seed);
        return cond ? loss_cond(net, PromptId{1}, z, sched, draw) : loss_uncond(net, z, sched, draw);
      };
    } else {
      LossSpec spec;
      spec.kind = parse_loss_kind(name);
      spec.frozen_sample_noise = true;
      auto obj = std::make_shared<Objective>(make_latent_objective(encoder, x_clean, spec));
      f = [obj](Tape& tape, Var xv) {
        Rng unused(0);
        return (*obj)(tape, xv, unused).loss;
      };
    }
    out.push_back({name, grad_check(f, x, h, tol)});
  }
  return out;
}

}  // namespace lshield
