#include "latent_shield/attack.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "latent_shield/image_io.hpp"

namespace lshield {

namespace {

constexpr std::size_t kDenseTrajectoryLimit = 200;
constexpr std::size_t kSparseTrajectoryStride = 5;
constexpr std::uint64_t kTrainStream = 0x73757272ULL;
constexpr std::uint64_t kEvalStream = 0x6576616cULL;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Tensor perturbed(const Tensor& x, const Tensor& delta) { return clamp(x + delta, 0.0, 1.0); }

void check_input(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("protection expects a (C, H, W) image, got " + to_string(x.shape()));
  for (double v : x.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("protection input must lie in [0, 1]");
  }
}

ProtectedResult finish(const Tensor& x, Tensor delta, Trajectory traj, const AttackConfig& cfg) {
  if (cfg.quantize == QuantizeMode::png8) delta = quantize_delta_png8(x, delta, cfg.epsilon);
  ProtectedResult r;
  r.x_protected = perturbed(x, delta);
  r.delta = std::move(delta);
  r.trajectory = std::move(traj);
  r.config_echo = cfg;
  return r;
}

std::vector<TrainSample> as_samples(std::span<const Tensor> images, PromptId prompt) {
  std::vector<TrainSample> out;
  out.reserve(images.size());
  for (const Tensor& x : images) out.push_back({x, prompt});
  return out;
}

double combo_lambda(const AttackConfig& cfg, LossKind combo) {
  return cfg.loss.kind == combo ? cfg.loss.lambda : 0.0;
}

void check_budget(const Tensor& x, const Tensor& delta, double epsilon, std::size_t outer) {
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double v = x[i] + delta[i];
    if (std::fabs(delta[i]) > epsilon || v < -1e-12 || v > 1.0 + 1e-12) {
      throw std::logic_error("budget violated after outer iteration " + std::to_string(outer));
    }
  }
}

}  // namespace

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 0.5)) {
    throw std::invalid_argument("epsilon must lie in [0, 0.5], got " + g17(epsilon));
  }
  if (epsilon > 0.0 && !(step_size > 0.0 && step_size <= epsilon)) {
    throw std::invalid_argument("step size must satisfy 0 < step <= epsilon, got " + g17(step_size));
  }
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  loss.validate();
}

std::string AttackConfig::dump() const {
  std::ostringstream os;
  os << "epsilon=" << g17(epsilon) << "\n"
     << "step_size=" << g17(step_size) << "\n"
     << "iterations=" << iterations << "\n"
     << "loss=" << loss_kind_name(loss.kind) << "\n"
     << "lambda=" << g17(loss.lambda) << "\n"
     << "log_reduction=" << (loss.log_reduction == LogReduction::sum ? "sum" : "mean") << "\n"
     << "frozen_sample_noise=" << (loss.frozen_sample_noise ? "true" : "false") << "\n"
     << "sigma_mode=" << sigma_mode.label() << "\n"
     << "seed=" << seed << "\n"
     << "quantize=" << (quantize == QuantizeMode::png8 ? "png8" : "none") << "\n";
  return os.str();
}

Tensor run_pgd(const EncoderParams& encoder, const Tensor& x, const Objective& objective, const AttackConfig& cfg,
               Rng& rng, const PgdSegment& segment, Trajectory& traj) {
  Tensor delta = segment.delta_init.empty() ? Tensor(x.shape(), 0.0) : segment.delta_init;
  require_same_shape(x, delta, "PGD warm start");
  const LatentDistribution clean = encode(encoder, x);
  traj.latent_numel = clean.mu.size();
  const std::size_t n = cfg.iterations;
  const std::size_t total = segment.total_iterations ? segment.total_iterations : segment.iter_offset + n;
  const bool frozen = cfg.epsilon == 0.0;

  for (std::size_t k = 0; k <= n; ++k) {
    const std::size_t iter = segment.iter_offset + k;
    const bool step = k < n && !frozen;
    bool record = total <= kDenseTrajectoryLimit || iter % kSparseTrajectoryStride == 0 || iter == total;
    if (k == 0 && !segment.record_start) record = false;
    if (frozen && k != 0 && k != n) record = false;
    if (!step && !record) continue;

    Tape tape;
    Var xp = tape.leaf(perturbed(x, delta), step);
    std::optional<ObjectiveEval> ev;
    if (step) {
      ev = objective(tape, xp, rng);
      const double value = ev->loss.value().item();
      if (!std::isfinite(value)) {
        throw AttackDiverged(iter, "non-finite loss at step " + std::to_string(iter) + "\n" + cfg.dump());
      }
    }
    if (record) {
      double loss = 0.0;
      LatentDistribution pert;
      if (ev && !objective.stochastic) {
        loss = ev->loss.value().item();
        pert = {ev->latent.mu.value(), ev->latent.logvar.value()};
      } else {
        Tape eval_tape;
        Rng eval_rng(segment.eval_seed);
        ObjectiveEval e = objective(eval_tape, eval_tape.constant(perturbed(x, delta)), eval_rng);
        loss = e.loss.value().item();
        pert = {e.latent.mu.value(), e.latent.logvar.value()};
      }
      if (!std::isfinite(loss)) {
        throw AttackDiverged(iter, "non-finite loss at step " + std::to_string(iter) + "\n" + cfg.dump());
      }
      const ShiftStats s = latent_shift(clean, pert);
      traj.append({iter, loss, s.mu_shift_l2sq, s.sigma_shift_l2sq, s.logvar_gap_mean, max_abs(delta)});
    }
    if (!step) continue;

    tape.backward(ev->loss);
    const Tensor g = tape.grad(xp);
    if (!all_finite(g)) {
      throw AttackDiverged(iter, "non-finite gradient at step " + std::to_string(iter) + "\n" + cfg.dump());
    }
    for (std::size_t i = 0; i < delta.size(); ++i) {
      // sign(0) = +1: at delta = 0 the quadratic losses have exactly zero
      // gradient, and a zero step would leave PGD stuck there.
      const double dir = g[i] < 0.0 ? -1.0 : 1.0;
      double d = std::clamp(delta[i] + cfg.step_size * dir, -cfg.epsilon, cfg.epsilon);
      if (x[i] + d > 1.0) d = 1.0 - x[i];
      if (x[i] + d < 0.0) d = -x[i];
      delta[i] = d;
    }
  }
  return delta;
}

ProtectedResult pgd_protect(const EncoderParams& encoder, const Tensor& x, const AttackConfig& cfg) {
  cfg.validate();
  check_input(x);
  if (needs_denoiser(cfg.loss.kind)) {
    throw std::invalid_argument(std::string(loss_kind_name(cfg.loss.kind)) +
                                " needs a surrogate; use fsgm_protect or aspl_protect");
  }
  const Objective obj = make_latent_objective(encoder, x, cfg.loss, cfg.sigma_mode);
  Rng rng(cfg.seed);
  PgdSegment seg;
  seg.eval_seed = mix64(cfg.seed ^ kEvalStream);
  Trajectory traj;
  Tensor delta = run_pgd(encoder, x, obj, cfg, rng, seg, traj);
  return finish(x, std::move(delta), std::move(traj), cfg);
}

std::uint64_t job_seed(std::uint64_t master, std::size_t index) {
  return Rng::derive(master, index).next_u64();
}

std::vector<BatchItem> protect_batch(const EncoderParams& encoder, std::span<const Tensor> images,
                                     const AttackConfig& cfg, std::size_t jobs) {
  cfg.validate();
  std::vector<BatchItem> items(images.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < images.size(); i = next++) {
      AttackConfig job = cfg;
      job.seed = job_seed(cfg.seed, i);
      try {
        items[i].result = pgd_protect(encoder, images[i], job);
      } catch (const std::exception& e) {
        items[i].error = e.what();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, images.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return items;
}

std::vector<ProtectedResult> fsgm_protect(const EncoderParams& encoder, std::span<const Tensor> images,
                                          PromptId c_prot, const AttackConfig& cfg, const SurrogateSetup& setup,
                                          DenoiserParams* surrogate_out) {
  cfg.validate();
  if (images.empty()) throw std::invalid_argument("fsgm_protect needs a non-empty dataset");
  for (const Tensor& x : images) check_input(x);
  DenoiserParams surrogate = setup.init;
  if (setup.train.steps > 0) {
    TrainOptions opts = setup.train;
    opts.sigma_mode = cfg.sigma_mode;
    Rng train_rng = Rng::derive(cfg.seed, kTrainStream);
    surrogate = train_denoiser(setup.init, as_samples(images, c_prot), encoder, setup.schedule, opts, train_rng)
                    .params;
  }
  const double lambda = combo_lambda(cfg, LossKind::combo_fsgm);
  std::vector<ProtectedResult> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Objective obj =
        make_denoiser_objective(encoder, images[i], surrogate, setup.schedule, c_prot, lambda, cfg.sigma_mode);
    Rng rng = Rng::derive(cfg.seed, i);
    PgdSegment seg;
    seg.eval_seed = mix64(Rng::derive(cfg.seed ^ kEvalStream, i).next_u64());
    Trajectory traj;
    Tensor delta = run_pgd(encoder, images[i], obj, cfg, rng, seg, traj);
    out.push_back(finish(images[i], std::move(delta), std::move(traj), cfg));
  }
  if (surrogate_out) *surrogate_out = std::move(surrogate);
  return out;
}

std::vector<ProtectedResult> aspl_protect(const EncoderParams& encoder, std::span<const Tensor> images,
                                          PromptId c_prot, const AttackConfig& cfg, const AsplSchedule& schedule,
                                          const SurrogateSetup& setup, DenoiserParams* surrogate_out) {
  cfg.validate();
  if (images.empty()) throw std::invalid_argument("aspl_protect needs a non-empty dataset");
  if (schedule.outer < 1 || schedule.delta_steps < 1) {
    throw std::invalid_argument("ASPL schedule needs outer >= 1 and delta_steps >= 1");
  }
  for (const Tensor& x : images) check_input(x);
  const std::size_t n = images.size();
  const std::size_t total = schedule.outer * schedule.delta_steps;
  const double lambda = combo_lambda(cfg, LossKind::combo_aspl);

  AttackConfig inner = cfg;
  inner.iterations = schedule.delta_steps;
  AttackConfig echo = cfg;
  echo.iterations = total;

  DenoiserParams theta = setup.init;
  TrainOptions opts = setup.train;
  opts.steps = schedule.model_steps;
  opts.sigma_mode = cfg.sigma_mode;
  Rng train_rng = Rng::derive(cfg.seed, kTrainStream);

  std::vector<Tensor> deltas(n);
  std::vector<Trajectory> trajs(n);
  std::vector<Rng> rngs;
  rngs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    deltas[i] = Tensor(images[i].shape(), 0.0);
    rngs.push_back(Rng::derive(cfg.seed, i));
  }

  for (std::size_t o = 0; o < schedule.outer; ++o) {
    if (schedule.model_steps > 0) {
      std::vector<TrainSample> current;
      current.reserve(n);
      for (std::size_t i = 0; i < n; ++i) current.push_back({perturbed(images[i], deltas[i]), c_prot});
      theta = train_denoiser(theta, current, encoder, setup.schedule, opts, train_rng).params;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const Objective obj =
          make_denoiser_objective(encoder, images[i], theta, setup.schedule, c_prot, lambda, cfg.sigma_mode);
      PgdSegment seg;
      seg.delta_init = deltas[i];
      seg.iter_offset = o * schedule.delta_steps;
      seg.total_iterations = total;
      seg.record_start = o == 0;
      seg.eval_seed = mix64(Rng::derive(cfg.seed ^ kEvalStream, i).next_u64());
      deltas[i] = run_pgd(encoder, images[i], obj, inner, rngs[i], seg, trajs[i]);
      check_budget(images[i], deltas[i], cfg.epsilon, o);
    }
  }

  std::vector<ProtectedResult> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(finish(images[i], std::move(deltas[i]), std::move(trajs[i]), echo));
  if (surrogate_out) *surrogate_out = std::move(theta);
  return out;
}

Tensor quantize_roundtrip(const Tensor& x, const Roundtrip& mode) {
  for (double v : x.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("quantize_roundtrip input must lie in [0, 1]");
  }
  if (mode.kind == Roundtrip::Kind::jpeg) {
    if (mode.quality < 1 || mode.quality > 100) {
      throw std::invalid_argument("JPEG quality " + std::to_string(mode.quality) + " outside [1, 100]");
    }
    return decode_jpeg(encode_jpeg(x, mode.quality));
  }
  Tensor q = x;
  for (double& v : q.data()) v = to_byte(v) / 255.0;
  return q;
}

Tensor quantize_delta_png8(const Tensor& x, const Tensor& delta, double epsilon) {
  require_same_shape(x, delta, "quantize_delta_png8");
  Tensor out(delta.shape());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double t = std::clamp(x[i] + delta[i], 0.0, 1.0);
    const double lo = std::floor(t * 255.0) / 255.0, hi = std::ceil(t * 255.0) / 255.0;
    const double first = (t - lo <= hi - t) ? lo : hi, second = first == lo ? hi : lo;
    double chosen = 0.0;
    for (double c : {first, second}) {
      const double d = c - x[i];
      if (c >= 0.0 && c <= 1.0 && std::fabs(d) <= epsilon) {
        chosen = d;
        break;
      }
    }
    out[i] = chosen;
  }
  return out;
}

}  // namespace lshield
