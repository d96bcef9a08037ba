#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <ostream>
#include <set>

#include <json.hpp>

#include "latent_shield/analytics.hpp"
#include "latent_shield/attack.hpp"
#include "latent_shield/container.hpp"
#include "latent_shield/gradient_suite.hpp"
#include "latent_shield/image_io.hpp"
#include "latent_shield/imaging.hpp"

namespace fs = std::filesystem;

namespace lshield::cli {

namespace {

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

ConfigEntries encoder_keys() {
  return {{"encoder.preset", "tiny-8x"}, {"encoder.seed", "1"}, {"encoder.weights", ""}};
}

ConfigEntries concat(ConfigEntries a, const ConfigEntries& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Core validators throw std::invalid_argument; at the CLI boundary those are
// configuration errors.
template <typename Fn>
auto as_config(Fn fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void require_dir(const fs::path& dir, const char* what) {
  if (!fs::is_directory(dir)) throw ConfigError(std::string(what) + " '" + dir.string() + "' is not a directory");
}

bool same_dir(const fs::path& a, const fs::path& b) {
  std::error_code ec;
  return fs::exists(b) && fs::equivalent(a, b, ec);
}

PromptId parse_prompt(const std::string& text, const std::string& what) {
  const std::uint64_t id = parse_uint(text, what);
  if (id >= default_vocabulary().size()) {
    throw ConfigError(what + ": prompt id " + text + " outside vocabulary of " +
                      std::to_string(default_vocabulary().size()));
  }
  return PromptId{static_cast<std::uint32_t>(id)};
}

CorruptionSpec parse_corruption(const std::string& text) {
  // kind[:param[:param]], e.g. resize_crop:0.8:1.0, jpeg:75
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = text.find(':', start);
    parts.push_back(text.substr(start, colon - start));
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  const std::string& kind = parts[0];
  auto arg = [&](std::size_t i, double fallback) {
    return parts.size() > i ? parse_real(parts[i], "corruption '" + text + "'") : fallback;
  };
  CorruptionSpec c;
  if (kind == "resize_crop" && parts.size() <= 3) {
    c = CorruptionSpec::resize_crop(arg(1, 0.8), arg(2, 1.0));
  } else if (kind == "smooth_uniform" && parts.size() <= 2) {
    c = CorruptionSpec::smooth_uniform(arg(1, 0.05));
  } else if (kind == "gaussian_denoise" && parts.size() <= 2) {
    c = CorruptionSpec::gaussian_denoise(arg(1, 1.0));
  } else if (kind == "jpeg" && parts.size() <= 2) {
    c = CorruptionSpec::jpeg(static_cast<int>(arg(1, 75)));
  } else {
    throw ConfigError("bad corruption '" + text +
                      "' (expected resize_crop[:min[:max]], smooth_uniform[:a], gaussian_denoise[:sigma] or "
                      "jpeg[:quality])");
  }
  as_config([&] { c.validate(); });
  return c;
}

void fill_attack(AttackConfig& a, const RunConfig& cfg, const std::string& section) {
  a.epsilon = cfg.real(section + ".epsilon");
  a.step_size = cfg.real(section + ".step_size");
  if (cfg.known(section + ".iterations")) a.iterations = cfg.integer(section + ".iterations");
  a.loss.kind = as_config([&] { return parse_loss_kind(cfg.get(section + ".loss")); });
  if (cfg.known(section + ".lambda")) a.loss.lambda = cfg.real(section + ".lambda");
  a.seed = cfg.integer(section + ".seed");
}

}  // namespace

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("LATENT_SHIELD_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return parse_uint(v, "LATENT_SHIELD_SEED");
}

RunConfig protect_defaults() {
  RunConfig cfg("protect", concat(encoder_keys(), {{"protect.loss", "add-log"},
                                                      {"protect.epsilon", "0.05"},
                                                      {"protect.steps", "1000"},
                                                      {"protect.step_size", "auto"},
                                                      {"protect.seed", "auto"},
                                                      {"protect.quantize", "png8"},
                                                      {"protect.keep_float", "false"},
                                                      {"protect.jobs", "1"},
                                                      {"protect.lambda", "0.05"},
                                                      {"protect.log_reduction", "sum"},
                                                      {"protect.frozen_sample_noise", "false"},
                                                      {"protect.sigma_mode", "natural"},
                                                      {"protect.target", ""},
                                                      {"protect.prompt", "0"},
                                                      {"protect.denoiser", ""},
                                                      {"protect.lr", "0.002"},
                                                      {"protect.aspl_outer", "50"},
                                                      {"protect.aspl_model_steps", "3"},
                                                      {"protect.aspl_delta_steps", "6"}}));
  cfg.mark_scheduling("protect.jobs");
  return cfg;
}

RunConfig stats_defaults() { return RunConfig("stats", concat(encoder_keys(), {{"stats.svg", "false"}})); }

RunConfig experiment_defaults() {
  const ExperimentConfig d;
  const WorldConfig& w = d.world;
  auto join = [](const auto& items, auto fmt) {
    std::string s;
    for (const auto& i : items) s += (s.empty() ? "" : ",") + fmt(i);
    return s;
  };
  const std::string corruptions = "resize_crop:0.8:1,smooth_uniform:0.05,gaussian_denoise:1,jpeg:75";
  ConfigEntries e{
      {"world.image_size", std::to_string(w.image_size)},
      {"world.train_images", std::to_string(w.train_images)},
      {"world.heldout_images", std::to_string(w.heldout_images)},
      {"world.heldout_draws", std::to_string(w.heldout_draws)},
      {"world.generic_subjects", std::to_string(w.generic_subjects)},
      {"world.generic_images_per_subject", std::to_string(w.generic_images_per_subject)},
      {"world.pretrain_steps", std::to_string(w.pretrain_steps)},
      {"world.finetune_steps", std::to_string(w.finetune_steps)},
      {"world.batch_size", std::to_string(w.batch_size)},
      {"world.lr", num(w.lr)},
      {"world.timesteps", std::to_string(w.timesteps)},
      {"world.beta_start", num(w.beta_start)},
      {"world.beta_end", num(w.beta_end)},
      {"world.hidden", std::to_string(w.denoiser.hidden)},
      {"world.time_channels", std::to_string(w.denoiser.time_channels)},
      {"world.condition_scale", num(w.denoiser.condition_scale)},
      {"world.seed", std::to_string(w.world_seed)},
      {"experiment.seeds", join(d.seeds, [](std::uint64_t s) { return std::to_string(s); })},
      {"experiment.c_prot", std::to_string(d.c_prot.id)},
      {"experiment.c_explo", join(d.c_explo, [](PromptId p) { return std::to_string(p.id); })},
      {"experiment.defenses", join(d.defenses, [](Defense x) { return std::string(defense_name(x)); })},
      {"experiment.sigma_modes", join(d.sigma_modes, [](const SigmaMode& m) { return m.label(); })},
      {"experiment.corruptions", corruptions},
      {"experiment.surrogate_steps", std::to_string(d.surrogate_steps)},
      {"experiment.jobs", std::to_string(d.jobs)},
      {"pid.epsilon", num(d.pid.epsilon)},
      {"pid.step_size", num(d.pid.step_size)},
      {"pid.iterations", std::to_string(d.pid.iterations)},
      {"pid.loss", std::string(loss_kind_name(d.pid.loss.kind))},
      {"pid.seed", std::to_string(d.pid.seed)},
      {"fsgm.epsilon", num(d.fsgm.epsilon)},
      {"fsgm.step_size", num(d.fsgm.step_size)},
      {"fsgm.iterations", std::to_string(d.fsgm.iterations)},
      {"fsgm.loss", std::string(loss_kind_name(d.fsgm.loss.kind))},
      {"fsgm.lambda", num(d.fsgm.loss.lambda)},
      {"fsgm.seed", std::to_string(d.fsgm.seed)},
      {"aspl.epsilon", num(d.aspl.epsilon)},
      {"aspl.step_size", num(d.aspl.step_size)},
      {"aspl.loss", std::string(loss_kind_name(d.aspl.loss.kind))},
      {"aspl.lambda", num(d.aspl.loss.lambda)},
      {"aspl.seed", std::to_string(d.aspl.seed)},
      {"aspl.outer", std::to_string(d.aspl_schedule.outer)},
      {"aspl.model_steps", std::to_string(d.aspl_schedule.model_steps)},
      {"aspl.delta_steps", std::to_string(d.aspl_schedule.delta_steps)},
  };
  RunConfig cfg("experiment", concat(encoder_keys(), e));
  cfg.mark_scheduling("experiment.jobs");
  return cfg;
}

RunConfig gradcheck_defaults() {
  return RunConfig("gradcheck",
                   concat(encoder_keys(), {{"gradcheck.seed", "0"}, {"gradcheck.tol", "1e-4"}, {"gradcheck.h", "1e-4"}}));
}

RunConfig init_weights_defaults() {
  return RunConfig("init-weights", concat(encoder_keys(), {{"init.kind", "encoder"},
                                                           {"init.pretrain_steps", "800"},
                                                           {"init.lr", "0.002"},
                                                           {"init.seed", "0"}}));
}

EncoderParams load_or_init_encoder(const RunConfig& cfg) {
  const std::string& weights = cfg.get("encoder.weights");
  if (!weights.empty()) return load_encoder(weights);
  const EncoderPreset preset = as_config([&] { return parse_preset(cfg.get("encoder.preset")); });
  return init_encoder(cfg.integer("encoder.seed"), preset);
}

AttackConfig attack_config(const RunConfig& cfg) {
  AttackConfig a;
  a.epsilon = cfg.real("protect.epsilon");
  a.iterations = cfg.integer("protect.steps");
  const std::string& step = cfg.get("protect.step_size");
  a.step_size = step == "auto" ? a.epsilon / 10.0 : parse_real(step, "protect.step_size");
  const std::string& seed = cfg.get("protect.seed");
  a.seed = seed == "auto" ? env_seed().value_or(0) : parse_uint(seed, "protect.seed");
  a.loss.kind = as_config([&] { return parse_loss_kind(cfg.get("protect.loss")); });
  a.loss.lambda = cfg.real("protect.lambda");
  const std::string& red = cfg.get("protect.log_reduction");
  if (red != "sum" && red != "mean") throw ConfigError("protect.log_reduction: expected sum or mean, got '" + red + "'");
  a.loss.log_reduction = red == "sum" ? LogReduction::sum : LogReduction::mean;
  a.loss.frozen_sample_noise = cfg.boolean("protect.frozen_sample_noise");
  a.sigma_mode = as_config([&] { return parse_sigma_mode(cfg.get("protect.sigma_mode")); });
  const std::string& q = cfg.get("protect.quantize");
  if (q != "png8" && q != "none") throw ConfigError("protect.quantize: expected png8 or none, got '" + q + "'");
  a.quantize = q == "png8" ? QuantizeMode::png8 : QuantizeMode::none;
  as_config([&] { a.validate(); });
  return a;
}

ExperimentConfig experiment_config(const RunConfig& cfg) {
  ExperimentConfig e;
  WorldConfig& w = e.world;
  w.image_size = cfg.integer("world.image_size");
  w.train_images = cfg.integer("world.train_images");
  w.heldout_images = cfg.integer("world.heldout_images");
  w.heldout_draws = cfg.integer("world.heldout_draws");
  w.generic_subjects = cfg.integer("world.generic_subjects");
  w.generic_images_per_subject = cfg.integer("world.generic_images_per_subject");
  w.pretrain_steps = cfg.integer("world.pretrain_steps");
  w.finetune_steps = cfg.integer("world.finetune_steps");
  w.batch_size = cfg.integer("world.batch_size");
  w.lr = cfg.real("world.lr");
  w.timesteps = cfg.integer("world.timesteps");
  w.beta_start = cfg.real("world.beta_start");
  w.beta_end = cfg.real("world.beta_end");
  w.denoiser.hidden = cfg.integer("world.hidden");
  w.denoiser.time_channels = cfg.integer("world.time_channels");
  w.denoiser.condition_scale = cfg.real("world.condition_scale");
  w.world_seed = cfg.integer("world.seed");

  e.seeds.clear();
  for (const std::string& s : cfg.list("experiment.seeds")) e.seeds.push_back(parse_uint(s, "experiment.seeds"));
  e.c_prot = parse_prompt(cfg.get("experiment.c_prot"), "experiment.c_prot");
  e.c_explo.clear();
  for (const std::string& s : cfg.list("experiment.c_explo")) e.c_explo.push_back(parse_prompt(s, "experiment.c_explo"));
  e.defenses.clear();
  for (const std::string& s : cfg.list("experiment.defenses")) {
    e.defenses.push_back(as_config([&] { return parse_defense(s); }));
  }
  e.sigma_modes.clear();
  for (const std::string& s : cfg.list("experiment.sigma_modes")) {
    e.sigma_modes.push_back(as_config([&] { return parse_sigma_mode(s); }));
  }
  e.corruptions.clear();
  for (const std::string& s : cfg.list("experiment.corruptions")) e.corruptions.push_back(parse_corruption(s));
  e.surrogate_steps = cfg.integer("experiment.surrogate_steps");
  e.jobs = cfg.integer("experiment.jobs");

  fill_attack(e.pid, cfg, "pid");
  fill_attack(e.fsgm, cfg, "fsgm");
  fill_attack(e.aspl, cfg, "aspl");
  e.aspl_schedule.outer = cfg.integer("aspl.outer");
  e.aspl_schedule.model_steps = cfg.integer("aspl.model_steps");
  e.aspl_schedule.delta_steps = cfg.integer("aspl.delta_steps");
  as_config([&] { e.validate(); });
  return e;
}

int cmd_protect(RunConfig cfg, const fs::path& in_dir, const fs::path& out_dir, Streams io) {
  // Everything that can be wrong with the configuration is found before any
  // image is touched.
  const AttackConfig attack = attack_config(cfg);
  cfg.set("protect.step_size", g17(attack.step_size));
  cfg.set("protect.seed", std::to_string(attack.seed));
  const std::size_t jobs = cfg.integer("protect.jobs");
  if (jobs == 0) throw ConfigError("protect.jobs must be >= 1");
  const bool keep_float = cfg.boolean("protect.keep_float");
  const PromptId prompt = parse_prompt(cfg.get("protect.prompt"), "protect.prompt");
  const bool combo = needs_denoiser(attack.loss.kind);
  if (combo && cfg.get("protect.denoiser").empty()) {
    throw ConfigError(std::string(loss_kind_name(attack.loss.kind)) + " needs protect.denoiser weights");
  }
  require_dir(in_dir, "input directory");
  if (same_dir(in_dir, out_dir)) throw ConfigError("output directory must differ from the input directory");
  const std::vector<fs::path> inputs = list_pngs(in_dir);
  if (inputs.empty()) throw ConfigError("no PNG files in " + in_dir.string());

  const EncoderParams encoder = load_or_init_encoder(cfg);
  AttackConfig job = attack;
  if (!cfg.get("protect.target").empty()) job.loss.target = read_png(cfg.get("protect.target"));
  fs::create_directories(out_dir);

  struct Item {
    fs::path input;
    Tensor image;
    std::string error;
    std::optional<ProtectedResult> result;
  };
  std::vector<Item> items;
  for (const fs::path& p : inputs) {
    Item it{p, {}, {}, {}};
    try {
      it.image = read_png(p);
    } catch (const std::exception& e) {
      it.error = e.what();
    }
    items.push_back(std::move(it));
  }
  std::vector<std::size_t> readable;
  std::vector<Tensor> images;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i].error.empty()) continue;
    readable.push_back(i);
    images.push_back(items[i].image);
  }

  if (!images.empty() && !combo) {
    std::vector<BatchItem> out = protect_batch(encoder, images, job, jobs);
    for (std::size_t k = 0; k < readable.size(); ++k) {
      items[readable[k]].result = std::move(out[k].result);
      items[readable[k]].error = out[k].error;
    }
  } else if (!images.empty()) {
    // Combo losses attack one shared surrogate over the whole batch.
    try {
      const DenoiserParams denoiser = load_denoiser(cfg.get("protect.denoiser"));
      WorldConfig world;
      SurrogateSetup setup{denoiser, world.schedule(), {}};
      setup.train.lr = cfg.real("protect.lr");
      std::vector<ProtectedResult> out;
      if (attack.loss.kind == LossKind::combo_fsgm) {
        setup.train.steps = 0;
        out = fsgm_protect(encoder, images, prompt, job, setup);
      } else {
        AsplSchedule sched{cfg.integer("protect.aspl_outer"), cfg.integer("protect.aspl_model_steps"),
                           cfg.integer("protect.aspl_delta_steps")};
        out = aspl_protect(encoder, images, prompt, job, sched, setup);
      }
      for (std::size_t k = 0; k < readable.size(); ++k) items[readable[k]].result = std::move(out[k]);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    } catch (const std::exception& e) {
      for (std::size_t i : readable) items[i].error = e.what();
    }
  }

  const std::uint64_t hash = cfg.hash();
  nlohmann::ordered_json manifest;
  manifest["command"] = "protect";
  manifest["config_hash"] = hex64(hash);
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [k, v] : cfg.resolved()) config[k] = v;
  manifest["config"] = config;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  std::size_t ok = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    Item& it = items[i];
    const std::string stem = it.input.stem().string();
    nlohmann::ordered_json entry;
    entry["input"] = it.input.filename().string();
    if (it.result) {
      const ProtectedResult& r = *it.result;
      const std::string png = stem + ".png", csv = stem + ".csv";
      try {
        write_png(out_dir / png, r.x_protected);
        export_trajectory(r.trajectory, out_dir / csv);
        if (keep_float) save_tensors({{"x_protected", r.x_protected}, {"delta", r.delta}}, out_dir / (stem + ".tensors"));
      } catch (const std::exception& e) {
        it.error = e.what();
      }
      if (it.error.empty()) {
        const ShiftStats s = latent_shift(encoder, it.image, r.x_protected);
        entry["output"] = png;
        entry["trajectory"] = csv;
        if (keep_float) entry["float"] = stem + ".tensors";
        entry["seed"] = r.config_echo.seed;
        entry["mu_shift"] = s.mu_shift_l2sq;
        entry["logvar_gap"] = s.logvar_gap_mean;
        entry["ssim"] = it.image.dim(1) >= 11 && it.image.dim(2) >= 11 ? ssim(it.image, r.x_protected) : 1.0;
        entry["psnr"] = psnr_capped(it.image, r.x_protected);
        entry["status"] = "ok";
        ++ok;
        io.out << it.input.filename().string() << " -> " << png << "\n";
      }
    }
    if (!it.error.empty()) {
      entry["status"] = "error";
      entry["error"] = it.error;
      io.err << "warning: " << it.input.filename().string() << ": " << it.error << "\n";
    }
    entry["config_hash"] = hex64(hash);
    list.push_back(entry);
  }
  manifest["items"] = list;
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  io.out << "protected " << ok << "/" << items.size() << " images, config " << hex64(hash) << "\n";
  return ok == items.size() ? kExitOk : kExitPartial;
}

int cmd_stats(const RunConfig& cfg, const fs::path& clean_dir, const fs::path& pert_dir, const fs::path& out_dir,
              Streams io) {
  const bool svg = cfg.boolean("stats.svg");
  require_dir(clean_dir, "clean directory");
  require_dir(pert_dir, "perturbed directory");
  if (same_dir(clean_dir, out_dir) || same_dir(pert_dir, out_dir)) {
    throw ConfigError("output directory must differ from the input directories");
  }
  const EncoderParams encoder = load_or_init_encoder(cfg);
  std::map<std::string, fs::path> clean, pert;
  for (const fs::path& p : list_pngs(clean_dir)) clean[p.filename().string()] = p;
  for (const fs::path& p : list_pngs(pert_dir)) pert[p.filename().string()] = p;
  std::vector<std::string> unmatched;
  for (const auto& [name, p] : clean)
    if (!pert.count(name)) unmatched.push_back(name + " (clean only)");
  for (const auto& [name, p] : pert)
    if (!clean.count(name)) unmatched.push_back(name + " (perturbed only)");

  fs::create_directories(out_dir);
  std::string csv = "name,mu_shift,sigma_shift,logvar_gap,ssim,psnr\n";
  std::size_t failed = 0, rows = 0;
  for (const auto& [name, cpath] : clean) {
    auto it = pert.find(name);
    if (it == pert.end()) continue;
    try {
      const Tensor x = read_png(cpath), y = read_png(it->second);
      const LatentDistribution a = encode(encoder, x), b = encode(encoder, y);
      const ShiftStats s = latent_shift(a, b);
      const double q = x.dim(1) >= 11 && x.dim(2) >= 11 ? ssim(x, y) : 1.0;
      csv += name + "," + g17(s.mu_shift_l2sq) + "," + g17(s.sigma_shift_l2sq) + "," + g17(s.logvar_gap_mean) + "," +
             g17(q) + "," + g17(psnr_capped(x, y)) + "\n";
      ++rows;
      if (svg) write_text_file(out_dir / (fs::path(name).stem().string() + ".svg"), shift_svg(a, b, name));
    } catch (const std::exception& e) {
      ++failed;
      io.err << "warning: " << name << ": " << e.what() << "\n";
    }
  }
  write_text_file(out_dir / "stats.csv", csv);
  for (const std::string& u : unmatched) io.err << "unmatched: " << u << "\n";
  io.out << rows << " pairs written to " << (out_dir / "stats.csv").string() << "\n";
  return unmatched.empty() && failed == 0 ? kExitOk : kExitPartial;
}

int cmd_experiment(const std::string& kind, const RunConfig& cfg, const fs::path& out_dir, Streams io) {
  if (kind != "mismatch" && kind != "adaptive" && kind != "corruption") {
    throw ConfigError("unknown experiment '" + kind + "' (expected mismatch, adaptive or corruption)");
  }
  const ExperimentConfig e = experiment_config(cfg);
  const EncoderParams encoder = load_or_init_encoder(cfg);
  fs::create_directories(out_dir);
  const ExperimentReport report = kind == "mismatch"   ? run_mismatch_experiment(encoder, e)
                                  : kind == "adaptive" ? run_adaptive_experiment(encoder, e)
                                                       : run_corruption_experiment(encoder, e);
  write_report(report, out_dir / (kind + ".csv"), out_dir / (kind + "_summary.json"));
  write_text_file(out_dir / (kind + "_config.txt"), "# config " + hex64(report.config_hash) + "\n" + e.canonical());
  io.out << kind << ": " << report.rows.size() << " rows, config " << hex64(report.config_hash) << "\n";
  for (const auto& [k, v] : report.notes) io.out << "  " << k << " = " << g17(v) << "\n";
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg, Streams io) {
  const double tol = cfg.real("gradcheck.tol");
  const double h = cfg.real("gradcheck.h");
  if (!(tol > 0.0)) throw ConfigError("gradcheck.tol must be > 0");
  if (!(h > 0.0 && h <= 1e-2)) throw ConfigError("gradcheck.h must lie in (0, 1e-2]");
  const EncoderParams encoder = load_or_init_encoder(cfg);
  const std::vector<SuiteEntry> suite = run_gradient_suite(encoder, cfg.integer("gradcheck.seed"), tol, h);
  bool all = true;
  const SuiteEntry* worst = nullptr;
  for (const SuiteEntry& s : suite) {
    io.out << (s.report.pass ? "pass " : "FAIL ") << s.loss << " rel_err=" << num(s.report.rel_err)
           << " max_elem_err=" << num(s.report.max_rel_err) << "\n";
    all = all && s.report.pass;
    if (!worst || s.report.rel_err > worst->report.rel_err || !s.report.failure.empty()) worst = &s;
  }
  if (!all && worst) {
    io.err << "worst: " << worst->loss << " rel_err=" << num(worst->report.rel_err) << " at flat index "
           << worst->report.worst_index << " analytic=" << g17(worst->report.analytic_at_worst)
           << " numeric=" << g17(worst->report.numeric_at_worst);
    if (!worst->report.failure.empty()) io.err << " (" << worst->report.failure << ")";
    io.err << "\n";
  }
  return all ? kExitOk : kExitPartial;
}

int cmd_init_weights(const RunConfig& cfg, const fs::path& out, Streams io) {
  const std::string& kind = cfg.get("init.kind");
  if (kind != "encoder" && kind != "denoiser") {
    throw ConfigError("init.kind: expected encoder or denoiser, got '" + kind + "'");
  }
  const EncoderParams encoder = load_or_init_encoder(cfg);
  if (kind == "encoder") {
    save_encoder(encoder, out);
    io.out << "wrote " << preset_name(encoder.preset) << " encoder to " << out.string() << "\n";
    return kExitOk;
  }
  WorldConfig world;
  world.pretrain_steps = cfg.integer("init.pretrain_steps");
  world.lr = cfg.real("init.lr");
  world.world_seed = cfg.integer("init.seed");
  as_config([&] { world.validate(); });
  save_denoiser(pretrain_base(encoder, world), out);
  io.out << "wrote denoiser (" << world.pretrain_steps << " pretraining steps) to " << out.string() << "\n";
  return kExitOk;
}

}  // namespace lshield::cli
