#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "latent_shield/container.hpp"

namespace fs = std::filesystem;
using namespace lshield;
using namespace lshield::cli;

namespace {

// Flags that override config keys; only flags actually given are applied.
struct Overrides {
  std::vector<std::pair<CLI::Option*, std::string>> keys;
  std::map<std::string, std::string> values;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    keys.emplace_back(app->add_option(flag, values[key], help), key);
  }
  void add_switch(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    keys.emplace_back(app->add_flag(flag, help), key);
    values[key] = "true";
  }
  void add_encoder(CLI::App* app) {
    add(app, "--preset", "encoder.preset", "Encoder preset: tiny-8x, micro-4x, debug-linear");
    add(app, "--encoder-seed", "encoder.seed", "Seed for preset weights");
    add(app, "--weights", "encoder.weights", "Encoder weight file (overrides the preset)");
  }
  // Config file first, then flags.
  void resolve(RunConfig& cfg, const std::string& config_path) const {
    if (!config_path.empty()) cfg.apply(read_config(config_path));
    for (const auto& [opt, key] : keys) {
      if (opt->count() > 0) cfg.set(key, values.at(key));
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-space image protection: PGD perturbations against Gaussian image encoders"};
  app.require_subcommand(1);
  Streams io{std::cout, std::cerr};

  std::string config_path, in_dir, out_dir, clean_dir, pert_dir, kind, out_file;

  Overrides protect_flags;
  CLI::App* protect = app.add_subcommand("protect", "Protect every PNG in a directory");
  protect->add_option("--in", in_dir, "Input directory of PNG images")->required();
  protect->add_option("--out", out_dir, "Output directory")->required();
  protect->add_option("--config", config_path, "key=value config file with [section] headers");
  protect_flags.add(protect, "--loss", "protect.loss",
                    "mean, var, sample, add, add-log, mean-target, combo-fsgm, combo-aspl");
  protect_flags.add(protect, "--epsilon", "protect.epsilon", "L-infinity budget");
  protect_flags.add(protect, "--steps", "protect.steps", "PGD iterations");
  protect_flags.add(protect, "--step-size", "protect.step_size", "Step size (default epsilon / 10)");
  protect_flags.add(protect, "--seed", "protect.seed", "Master seed (default LATENT_SHIELD_SEED, else 0)");
  protect_flags.add(protect, "--quantize", "protect.quantize", "png8 or none");
  protect_flags.add_switch(protect, "--keep-float", "protect.keep_float", "Also write unquantized tensors");
  protect_flags.add(protect, "--jobs", "protect.jobs", "Parallel per-image jobs");
  protect_flags.add(protect, "--lambda", "protect.lambda", "Latent-term weight for combo losses");
  protect_flags.add(protect, "--log-reduction", "protect.log_reduction", "sum or mean");
  protect_flags.add(protect, "--sigma-mode", "protect.sigma_mode", "natural, zero, clipped:V, fixed:V");
  protect_flags.add(protect, "--target", "protect.target", "Target PNG for mean-target");
  protect_flags.add(protect, "--prompt", "protect.prompt", "Prompt id for combo losses");
  protect_flags.add(protect, "--denoiser", "protect.denoiser", "Denoiser weights for combo losses");
  protect_flags.add_encoder(protect);

  Overrides stats_flags;
  CLI::App* stats = app.add_subcommand("stats", "Latent shift of perturbed images against their clean originals");
  stats->add_option("--clean", clean_dir, "Clean image directory")->required();
  stats->add_option("--pert", pert_dir, "Perturbed image directory")->required();
  stats->add_option("--out", out_dir, "Output directory")->required();
  stats->add_option("--config", config_path, "Config file");
  stats_flags.add_switch(stats, "--svg", "stats.svg", "Write one SVG per pair");
  stats_flags.add_encoder(stats);

  Overrides exp_flags;
  CLI::App* experiment = app.add_subcommand("experiment", "Toy fine-tuning robustness experiments");
  experiment->add_option("kind", kind, "mismatch, adaptive or corruption")->required();
  experiment->add_option("--config", config_path, "Config file");
  experiment->add_option("--out", out_dir, "Output directory")->required();
  exp_flags.add(experiment, "--jobs", "experiment.jobs", "Parallel seeds");
  exp_flags.add(experiment, "--seeds", "experiment.seeds", "Comma-separated seed list");
  exp_flags.add_encoder(experiment);

  Overrides grad_flags;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
  gradcheck->add_option("--config", config_path, "Config file");
  grad_flags.add(gradcheck, "--seed", "gradcheck.seed", "Seed of the probe point");
  grad_flags.add(gradcheck, "--tol", "gradcheck.tol", "Relative error tolerance");
  grad_flags.add(gradcheck, "--step", "gradcheck.h", "Central difference step");
  grad_flags.add_encoder(gradcheck);

  Overrides init_flags;
  CLI::App* init = app.add_subcommand("init-weights", "Write encoder weights or a pretrained toy denoiser");
  init->add_option("--out", out_file, "Output weight file")->required();
  init->add_option("--config", config_path, "Config file");
  init_flags.add(init, "--kind", "init.kind", "encoder or denoiser");
  init_flags.add(init, "--pretrain-steps", "init.pretrain_steps", "Denoiser pretraining steps");
  init_flags.add(init, "--lr", "init.lr", "Denoiser learning rate");
  init_flags.add(init, "--seed", "init.seed", "Pretraining corpus seed");
  init_flags.add_encoder(init);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*protect) {
      RunConfig cfg = protect_defaults();
      protect_flags.resolve(cfg, config_path);
      return cmd_protect(cfg, in_dir, out_dir, io);
    }
    if (*stats) {
      RunConfig cfg = stats_defaults();
      stats_flags.resolve(cfg, config_path);
      return cmd_stats(cfg, clean_dir, pert_dir, out_dir, io);
    }
    if (*experiment) {
      RunConfig cfg = experiment_defaults();
      exp_flags.resolve(cfg, config_path);
      return cmd_experiment(kind, cfg, out_dir, io);
    }
    if (*gradcheck) {
      RunConfig cfg = gradcheck_defaults();
      grad_flags.resolve(cfg, config_path);
      return cmd_gradcheck(cfg, io);
    }
    RunConfig cfg = init_weights_defaults();
    init_flags.resolve(cfg, config_path);
    return cmd_init_weights(cfg, out_file, io);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPartial;
  }
}
