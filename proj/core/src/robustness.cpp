#include "latent_shield/robustness.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <thread>

namespace lshield {

namespace {

// Stream tags for Rng::derive; arbitrary but fixed.
constexpr std::uint64_t kSubjectStream = 0x7375626aULL;
constexpr std::uint64_t kHeldoutStream = 0x68656c64ULL;
constexpr std::uint64_t kFinetuneStream = 0x66696e65ULL;
constexpr std::uint64_t kNoiseStream = 0x6e6f6973ULL;
constexpr std::uint64_t kAttackStream = 0x61747463ULL;
constexpr std::uint64_t kCorruptStream = 0x636f7272ULL;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string condition_label(PromptId prot, PromptId explo) {
  return "c_prot=" + std::to_string(prot.id) + ";c_explo=" + std::to_string(explo.id);
}

struct ImageSetStats {
  ShiftStats shift;
  double ssim = 0.0;
  double psnr = 0.0;
};

ImageSetStats compare_sets(const EncoderParams& encoder, const std::vector<Tensor>& clean,
                           const std::vector<Tensor>& pert, const SigmaMode& mode = {}) {
  ImageSetStats s;
  const double n = static_cast<double>(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const ShiftStats one = latent_shift(apply_sigma_mode(encode(encoder, clean[i]), mode),
                                        apply_sigma_mode(encode(encoder, pert[i]), mode));
    s.shift.mu_shift_l2sq += one.mu_shift_l2sq / n;
    s.shift.sigma_shift_l2sq += one.sigma_shift_l2sq / n;
    s.shift.logvar_gap_mean += one.logvar_gap_mean / n;
    s.ssim += ssim(clean[i], pert[i]) / n;
    s.psnr += psnr_capped(clean[i], pert[i]) / n;
  }
  return s;
}

// Runs fn(seed_index) for every seed on up to `jobs` threads and returns the
// per-seed results in seed order.
template <typename Fn>
auto for_each_seed(std::size_t count, std::size_t jobs, Fn fn) {
  using Result = decltype(fn(std::size_t{0}));
  std::vector<Result> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        results[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, count));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

AttackConfig seeded(const AttackConfig& base, std::uint64_t seed, std::uint64_t index) {
  AttackConfig c = base;
  c.seed = Rng::derive(mix64(seed ^ kAttackStream) ^ base.seed, index).next_u64();
  return c;
}

}  // namespace

void WorldConfig::validate() const {
  if (image_size == 0 || image_size % 8 != 0) throw std::invalid_argument("image_size must be a positive multiple of 8");
  if (train_images == 0 || heldout_images == 0 || heldout_draws == 0) {
    throw std::invalid_argument("train_images, heldout_images and heldout_draws must be >= 1");
  }
  if (generic_subjects == 0 || generic_images_per_subject == 0) {
    throw std::invalid_argument("generic corpus must be non-empty");
  }
  if (pretrain_steps == 0 || finetune_steps == 0) throw std::invalid_argument("training steps must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be > 0");
  schedule();
}

NoiseSchedule WorldConfig::schedule() const { return make_schedule(timesteps, beta_start, beta_end); }

SubjectData make_subject_data(const WorldConfig& world, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, kSubjectStream);
  SubjectData d;
  d.style = random_subject(rng);
  for (std::size_t i = 0; i < world.train_images; ++i) {
    d.train.push_back(synthetic_subject_image(d.style, rng, world.image_size, world.image_size));
  }
  for (std::size_t i = 0; i < world.heldout_images; ++i) {
    d.heldout.push_back(synthetic_subject_image(d.style, rng, world.image_size, world.image_size));
  }
  return d;
}

DenoiserParams pretrain_base(const EncoderParams& encoder, const WorldConfig& world) {
  world.validate();
  Rng rng(world.world_seed);
  std::vector<TrainSample> corpus;
  for (std::size_t s = 0; s < world.generic_subjects; ++s) {
    const SubjectStyle style = random_subject(rng);
    for (std::size_t k = 0; k < world.generic_images_per_subject; ++k) {
      Tensor img = synthetic_subject_image(style, rng, world.image_size, world.image_size);
      const PromptId p{static_cast<std::uint32_t>(rng.below(world.denoiser.vocab_size))};
      corpus.push_back({std::move(img), p});
    }
  }
  DenoiserShape shape = world.denoiser;
  shape.latent_channels = encoder.latent_channels();
  const DenoiserParams init = init_denoiser(mix64(world.world_seed), shape);
  TrainOptions opts;
  opts.steps = world.pretrain_steps;
  opts.lr = world.lr;
  opts.batch_size = world.batch_size;
  return train_denoiser(init, corpus, encoder, world.schedule(), opts, rng).params;
}

HeldoutSet make_heldout(const EncoderParams& encoder, const SubjectData& data, const WorldConfig& world,
                        std::uint64_t seed) {
  Rng rng = Rng::derive(seed, kHeldoutStream);
  const NoiseSchedule sched = world.schedule();
  HeldoutSet h;
  for (const Tensor& x : data.heldout) {
    const LatentDistribution d = encode(encoder, x);
    h.latents.push_back(sample(d, rng.normal_tensor(d.mu.shape())));
  }
  // Stratified timesteps: one draw per equal-width slice of 1..T.
  const std::size_t n = world.heldout_draws, steps = sched.steps();
  for (std::size_t k = 0; k < n; ++k) {
    NoiseDraw d;
    const double u = (static_cast<double>(k) + rng.uniform()) / static_cast<double>(n);
    d.t = std::min(steps, 1 + static_cast<std::size_t>(u * static_cast<double>(steps)));
    d.noise = rng.normal_tensor(h.latents.front().shape());
    h.draws.push_back(std::move(d));
  }
  return h;
}

double finetune_heldout_loss(const DenoiserParams& base, const EncoderParams& encoder,
                             const std::vector<Tensor>& train, PromptId c, const HeldoutSet& heldout,
                             const WorldConfig& world, const SigmaMode& mode, std::uint64_t seed) {
  std::vector<LatentSample> samples;
  samples.reserve(train.size());
  for (const Tensor& x : train) samples.push_back({encode(encoder, x), c});
  TrainOptions opts;
  opts.steps = world.finetune_steps;
  opts.lr = world.lr;
  opts.batch_size = world.batch_size;
  opts.sigma_mode = mode;
  Rng rng = Rng::derive(seed, kFinetuneStream);
  const NoiseSchedule sched = world.schedule();
  const TrainResult r = train_denoiser(base, samples, sched, opts, rng);
  return heldout_loss(r.params, heldout.latents, c, heldout.draws, sched);
}

std::string_view defense_name(Defense d) {
  switch (d) {
    case Defense::none: return "none";
    case Defense::random_noise: return "random";
    case Defense::fsgm: return "fsgm";
    case Defense::aspl: return "aspl";
    case Defense::pid: return "pid";
  }
  return "unknown";
}

Defense parse_defense(std::string_view name) {
  if (name == "none") return Defense::none;
  if (name == "random") return Defense::random_noise;
  if (name == "fsgm") return Defense::fsgm;
  if (name == "aspl") return Defense::aspl;
  if (name == "pid") return Defense::pid;
  throw std::invalid_argument("unknown defense '" + std::string(name) + "' (expected none, random, fsgm, aspl or pid)");
}

ExperimentConfig::ExperimentConfig() {
  pid.loss.kind = LossKind::add_log;
  pid.iterations = 1000;
  fsgm.loss.kind = LossKind::mean;  // anything but combo_fsgm: plain surrogate objective
  fsgm.iterations = 100;
  aspl.loss.kind = LossKind::mean;
  sigma_modes = {SigmaMode::natural(), SigmaMode::zero(), SigmaMode::clipped(1e-7), SigmaMode::fixed(1e-7)};
  corruptions = {CorruptionSpec::resize_crop(0.8, 1.0), CorruptionSpec::smooth_uniform(0.05),
                 CorruptionSpec::gaussian_denoise(1.0), CorruptionSpec::jpeg(75)};
}

void ExperimentConfig::validate() const {
  world.validate();
  if (seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
  pid.validate();
  fsgm.validate();
  aspl.validate();
  if (needs_denoiser(pid.loss.kind)) throw std::invalid_argument("pid loss must be encoder-only");
  if (c_prot.id >= world.denoiser.vocab_size) throw std::invalid_argument("c_prot outside vocabulary");
  if (c_explo.empty()) throw std::invalid_argument("c_explo set must be non-empty");
  for (PromptId p : c_explo)
    if (p.id >= world.denoiser.vocab_size) throw std::invalid_argument("c_explo id outside vocabulary");
  if (defenses.empty()) throw std::invalid_argument("defense list must be non-empty");
  for (const CorruptionSpec& c : corruptions) c.validate();
  if (jobs == 0) throw std::invalid_argument("jobs must be >= 1");
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream os;
  const WorldConfig& w = world;
  os << "world.image_size=" << w.image_size << "\nworld.train_images=" << w.train_images
     << "\nworld.heldout_images=" << w.heldout_images << "\nworld.heldout_draws=" << w.heldout_draws
     << "\nworld.generic_subjects=" << w.generic_subjects
     << "\nworld.generic_images_per_subject=" << w.generic_images_per_subject
     << "\nworld.pretrain_steps=" << w.pretrain_steps << "\nworld.finetune_steps=" << w.finetune_steps
     << "\nworld.batch_size=" << w.batch_size << "\nworld.lr=" << g17(w.lr) << "\nworld.timesteps=" << w.timesteps
     << "\nworld.beta_start=" << g17(w.beta_start) << "\nworld.beta_end=" << g17(w.beta_end)
     << "\nworld.hidden=" << w.denoiser.hidden << "\nworld.vocab_size=" << w.denoiser.vocab_size
     << "\nworld.time_channels=" << w.denoiser.time_channels
     << "\nworld.condition_scale=" << g17(w.denoiser.condition_scale) << "\nworld.seed=" << w.world_seed << "\n";
  os << "seeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
  os << "\n";
  for (const auto& [name, cfg] : {std::pair{"pid", &pid}, std::pair{"fsgm", &fsgm}, std::pair{"aspl", &aspl}}) {
    std::istringstream dump(cfg->dump());
    std::string line;
    while (std::getline(dump, line)) os << name << "." << line << "\n";
  }
  os << "aspl.outer=" << aspl_schedule.outer << "\naspl.model_steps=" << aspl_schedule.model_steps
     << "\naspl.delta_steps=" << aspl_schedule.delta_steps << "\nsurrogate_steps=" << surrogate_steps
     << "\nc_prot=" << c_prot.id << "\nc_explo=";
  for (std::size_t i = 0; i < c_explo.size(); ++i) os << (i ? "," : "") << c_explo[i].id;
  os << "\ndefenses=";
  for (std::size_t i = 0; i < defenses.size(); ++i) os << (i ? "," : "") << defense_name(defenses[i]);
  os << "\nsigma_modes=";
  for (std::size_t i = 0; i < sigma_modes.size(); ++i) os << (i ? "," : "") << sigma_modes[i].label();
  os << "\ncorruptions=";
  for (std::size_t i = 0; i < corruptions.size(); ++i) {
    os << (i ? "," : "") << corruptions[i].label() << "@" << corruptions[i].seed;
  }
  os << "\n";
  return os.str();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(canonical()); }

std::vector<Tensor> protect_images(Defense d, const EncoderParams& encoder, const std::vector<Tensor>& images,
                                   const DenoiserParams& base, const ExperimentConfig& cfg, std::uint64_t seed) {
  const NoiseSchedule sched = cfg.world.schedule();
  SurrogateSetup setup{base, sched, {}};
  setup.train.lr = cfg.world.lr;
  setup.train.batch_size = cfg.world.batch_size;
  std::vector<Tensor> out;
  switch (d) {
    case Defense::none: return images;
    case Defense::random_noise: {
      Rng rng = Rng::derive(seed, kNoiseStream);
      const double eps = cfg.pid.epsilon;
      for (const Tensor& x : images) {
        Tensor delta = rng.uniform_tensor(x.shape(), -eps, eps);
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = std::clamp(x[i] + delta[i], 0.0, 1.0) - x[i];
        if (cfg.pid.quantize == QuantizeMode::png8) delta = quantize_delta_png8(x, delta, eps);
        out.push_back(clamp(x + delta, 0.0, 1.0));
      }
      return out;
    }
    case Defense::pid:
      for (std::size_t i = 0; i < images.size(); ++i) {
        out.push_back(pgd_protect(encoder, images[i], seeded(cfg.pid, seed, i)).x_protected);
      }
      return out;
    case Defense::fsgm: {
      setup.train.steps = cfg.surrogate_steps;
      for (ProtectedResult& r : fsgm_protect(encoder, images, cfg.c_prot, seeded(cfg.fsgm, seed, 0), setup)) {
        out.push_back(std::move(r.x_protected));
      }
      return out;
    }
    case Defense::aspl: {
      for (ProtectedResult& r :
           aspl_protect(encoder, images, cfg.c_prot, seeded(cfg.aspl, seed, 0), cfg.aspl_schedule, setup)) {
        out.push_back(std::move(r.x_protected));
      }
      return out;
    }
  }
  return out;
}

ExperimentReport run_mismatch_experiment(const EncoderParams& encoder, const ExperimentConfig& cfg) {
  cfg.validate();
  const std::uint64_t hash = cfg.hash();
  const DenoiserParams base = pretrain_base(encoder, cfg.world);
  auto per_seed = for_each_seed(cfg.seeds.size(), cfg.jobs, [&](std::size_t si) {
    const std::uint64_t seed = cfg.seeds[si];
    const SubjectData data = make_subject_data(cfg.world, seed);
    const HeldoutSet held = make_heldout(encoder, data, cfg.world, seed);
    std::vector<double> clean_loss;
    for (PromptId c : cfg.c_explo) {
      clean_loss.push_back(finetune_heldout_loss(base, encoder, data.train, c, held, cfg.world, {}, seed));
    }
    std::vector<ExperimentRow> rows;
    for (Defense d : cfg.defenses) {
      const std::vector<Tensor> prot = protect_images(d, encoder, data.train, base, cfg, seed);
      const ImageSetStats st = compare_sets(encoder, data.train, prot);
      for (std::size_t k = 0; k < cfg.c_explo.size(); ++k) {
        ExperimentRow r;
        r.experiment = "mismatch";
        r.defense = std::string(defense_name(d));
        r.condition = condition_label(cfg.c_prot, cfg.c_explo[k]);
        r.seed = seed;
        r.loss_clean_trained = clean_loss[k];
        r.loss_protected_trained =
            d == Defense::none
                ? clean_loss[k]
                : finetune_heldout_loss(base, encoder, prot, cfg.c_explo[k], held, cfg.world, {}, seed);
        r.shift = st.shift;
        r.ssim = st.ssim;
        r.psnr = st.psnr;
        r.config_hash = hash;
        rows.push_back(std::move(r));
      }
    }
    return rows;
  });
  ExperimentReport report{"mismatch", hash, {}, {}};
  for (auto& rows : per_seed)
    for (auto& r : rows) report.rows.push_back(std::move(r));
  // Matched vs mismatched aggregates per defense, averaged over seeds.
  const std::vector<MismatchGap> gaps = mismatch_gaps(report, cfg.c_prot);
  for (Defense d : cfg.defenses) {
    const std::string name(defense_name(d));
    double matched = 0.0, mismatched = 0.0;
    std::size_t n = 0;
    for (const MismatchGap& g : gaps) {
      if (g.defense != name) continue;
      matched += g.matched;
      mismatched += g.mismatched;
      ++n;
    }
    if (n == 0) continue;
    report.notes.emplace_back(name + ".matched_gap_mean", matched / static_cast<double>(n));
    report.notes.emplace_back(name + ".mismatched_gap_mean", mismatched / static_cast<double>(n));
  }
  return report;
}

ExperimentReport run_adaptive_experiment(const EncoderParams& encoder, const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.sigma_modes.empty()) throw std::invalid_argument("adaptive experiment needs sigma modes");
  const std::uint64_t hash = cfg.hash();
  const DenoiserParams base = pretrain_base(encoder, cfg.world);
  struct SeedOut {
    std::vector<ExperimentRow> rows;
    std::size_t below = 0, total = 0;
  };
  auto per_seed = for_each_seed(cfg.seeds.size(), cfg.jobs, [&](std::size_t si) {
    const std::uint64_t seed = cfg.seeds[si];
    const SubjectData data = make_subject_data(cfg.world, seed);
    const HeldoutSet held = make_heldout(encoder, data, cfg.world, seed);
    const std::vector<Tensor> prot = protect_images(Defense::pid, encoder, data.train, base, cfg, seed);
    SeedOut out;
    for (const Tensor& x : prot) {
      const Tensor sigma = encode(encoder, x).sigma();
      for (double s : sigma.data()) {
        out.below += s < 1e-7 ? 1 : 0;
        ++out.total;
      }
    }
    for (const SigmaMode& mode : cfg.sigma_modes) {
      const ImageSetStats st = compare_sets(encoder, data.train, prot, mode);
      ExperimentRow r;
      r.experiment = "adaptive";
      r.defense = "pid";
      r.condition = "sigma=" + mode.label();
      r.seed = seed;
      r.loss_clean_trained = finetune_heldout_loss(base, encoder, data.train, cfg.c_prot, held, cfg.world, mode, seed);
      r.loss_protected_trained = finetune_heldout_loss(base, encoder, prot, cfg.c_prot, held, cfg.world, mode, seed);
      r.shift = st.shift;
      r.ssim = st.ssim;
      r.psnr = st.psnr;
      r.config_hash = hash;
      out.rows.push_back(std::move(r));
    }
    return out;
  });
  ExperimentReport report{"adaptive", hash, {}, {}};
  std::size_t below = 0, total = 0;
  for (auto& s : per_seed) {
    below += s.below;
    total += s.total;
    for (auto& r : s.rows) report.rows.push_back(std::move(r));
  }
  // Clipped and fixed sigma at 1e-7 only differ on elements below the floor.
  report.notes.emplace_back("natural_sigma_below_1e-7_rate",
                            total ? static_cast<double>(below) / static_cast<double>(total) : 0.0);
  return report;
}

ExperimentReport run_corruption_experiment(const EncoderParams& encoder, const ExperimentConfig& cfg) {
  cfg.validate();
  const std::uint64_t hash = cfg.hash();
  const DenoiserParams base = pretrain_base(encoder, cfg.world);
  auto per_seed = for_each_seed(cfg.seeds.size(), cfg.jobs, [&](std::size_t si) {
    const std::uint64_t seed = cfg.seeds[si];
    const SubjectData data = make_subject_data(cfg.world, seed);
    const HeldoutSet held = make_heldout(encoder, data, cfg.world, seed);
    const std::vector<Tensor> prot = protect_images(Defense::pid, encoder, data.train, base, cfg, seed);
    std::vector<ExperimentRow> rows;
    std::vector<std::optional<CorruptionSpec>> conditions{std::nullopt};
    for (const CorruptionSpec& c : cfg.corruptions) conditions.emplace_back(c);
    for (const auto& spec : conditions) {
      std::vector<Tensor> clean_c, prot_c;
      for (std::size_t i = 0; i < prot.size(); ++i) {
        if (!spec) {
          clean_c.push_back(data.train[i]);
          prot_c.push_back(prot[i]);
          continue;
        }
        CorruptionSpec s = *spec;
        s.seed = Rng::derive(mix64(seed ^ kCorruptStream) ^ spec->seed, i).next_u64();
        // Same corruption draw for the clean and protected copy of an image.
        clean_c.push_back(corrupt(data.train[i], s));
        prot_c.push_back(corrupt(prot[i], s));
      }
      const ImageSetStats st = compare_sets(encoder, data.train, prot_c);
      ExperimentRow r;
      r.experiment = "corruption";
      r.defense = "pid";
      r.condition = spec ? spec->label() : "none";
      r.seed = seed;
      r.loss_clean_trained = finetune_heldout_loss(base, encoder, clean_c, cfg.c_prot, held, cfg.world, {}, seed);
      r.loss_protected_trained = finetune_heldout_loss(base, encoder, prot_c, cfg.c_prot, held, cfg.world, {}, seed);
      r.shift = st.shift;
      r.ssim = st.ssim;
      r.psnr = st.psnr;
      r.config_hash = hash;
      rows.push_back(std::move(r));
    }
    return rows;
  });
  ExperimentReport report{"corruption", hash, {}, {}};
  for (auto& rows : per_seed)
    for (auto& r : rows) report.rows.push_back(std::move(r));
  return report;
}

std::vector<MismatchGap> mismatch_gaps(const ExperimentReport& report, PromptId c_prot) {
  // (defense, seed) -> matched gap, sum of mismatched gaps, mismatched count
  std::map<std::pair<std::string, std::uint64_t>, std::tuple<double, double, std::size_t, bool>> acc;
  std::vector<std::pair<std::string, std::uint64_t>> order;
  const std::string matched_suffix = ";c_explo=" + std::to_string(c_prot.id);
  for (const ExperimentRow& r : report.rows) {
    const auto key = std::make_pair(r.defense, r.seed);
    auto [it, inserted] = acc.try_emplace(key, 0.0, 0.0, 0, false);
    if (inserted) order.push_back(key);
    auto& [matched, mis_sum, mis_n, has_matched] = it->second;
    const bool is_matched = r.condition.size() >= matched_suffix.size() &&
                            r.condition.compare(r.condition.size() - matched_suffix.size(), matched_suffix.size(),
                                                matched_suffix) == 0;
    if (is_matched) {
      matched = r.gap();
      has_matched = true;
    } else {
      mis_sum += r.gap();
      ++mis_n;
    }
  }
  std::vector<MismatchGap> out;
  for (const auto& key : order) {
    const auto& [matched, mis_sum, mis_n, has_matched] = acc.at(key);
    if (!has_matched || mis_n == 0) continue;
    MismatchGap g;
    g.defense = key.first;
    g.seed = key.second;
    g.matched = matched;
    g.mismatched = mis_sum / static_cast<double>(mis_n);
    g.relative_shrink = matched > 0.0 ? 1.0 - g.mismatched / matched : std::nan("");
    out.push_back(g);
  }
  return out;
}

std::string report_csv(const ExperimentReport& report) {
  std::string out = kReportCsvHeader;
  out += '\n';
  for (const ExperimentRow& r : report.rows) {
    out += r.experiment + "," + r.defense + "," + r.condition + "," + std::to_string(r.seed) + "," +
           g17(r.loss_clean_trained) + "," + g17(r.loss_protected_trained) + "," + g17(r.shift.mu_shift_l2sq) + "," +
           g17(r.shift.sigma_shift_l2sq) + "," + g17(r.shift.logvar_gap_mean) + "," + g17(r.ssim) + "," +
           g17(std::min(r.psnr, kPsnrCap)) + "," + hex64(r.config_hash) + "\n";
  }
  return out;
}

std::string report_summary_json(const ExperimentReport& report) {
  using nlohmann::ordered_json;
  struct Agg {
    std::size_t n = 0;
    double clean = 0, prot = 0, gap = 0, mu = 0, sigma = 0, logvar = 0, ssim = 0, psnr = 0;
  };
  std::map<std::pair<std::string, std::string>, Agg> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const ExperimentRow& r : report.rows) {
    const auto key = std::make_pair(r.defense, r.condition);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    Agg& a = it->second;
    ++a.n;
    a.clean += r.loss_clean_trained;
    a.prot += r.loss_protected_trained;
    a.gap += r.gap();
    a.mu += r.shift.mu_shift_l2sq;
    a.sigma += r.shift.sigma_shift_l2sq;
    a.logvar += r.shift.logvar_gap_mean;
    a.ssim += r.ssim;
    a.psnr += std::min(r.psnr, kPsnrCap);
  }
  ordered_json j;
  j["experiment"] = report.experiment;
  j["config_hash"] = hex64(report.config_hash);
  j["metric"] = "held-out conditional denoising loss after toy fine-tuning (proxy; higher = stronger protection)";
  j["rows"] = report.rows.size();
  ordered_json groups_json = ordered_json::array();
  for (const auto& key : order) {
    const Agg& a = groups.at(key);
    const double n = static_cast<double>(a.n);
    groups_json.push_back({{"defense", key.first},
                           {"condition", key.second},
                           {"seeds", a.n},
                           {"mean_loss_clean_trained", a.clean / n},
                           {"mean_loss_protected_trained", a.prot / n},
                           {"mean_gap", a.gap / n},
                           {"mean_mu_shift", a.mu / n},
                           {"mean_sigma_shift", a.sigma / n},
                           {"mean_logvar_gap", a.logvar / n},
                           {"mean_ssim", a.ssim / n},
                           {"mean_psnr", a.psnr / n}});
  }
  j["groups"] = groups_json;
  ordered_json notes = ordered_json::object();
  for (const auto& [k, v] : report.notes) notes[k] = v;
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

void write_report(const ExperimentReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path) {
  write_text_file(csv_path, report_csv(report));
  write_text_file(json_path, report_summary_json(report));
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace lshield
