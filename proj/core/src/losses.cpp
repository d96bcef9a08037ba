#include "latent_shield/losses.hpp"

#include <cmath>
#include <cstring>
#include <memory>

#include "latent_shield/container.hpp"

namespace lshield {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void require_latent_match(const CleanLatentCache& cache, const LatentVar& pert, const char* what) {
  if (cache.empty()) throw std::invalid_argument(std::string(what) + ": clean latent cache is empty");
  require_same_shape(cache.mu0(), pert.mu.value(), what);
}

}  // namespace

std::uint64_t fingerprint(const Tensor& t) {
  std::uint64_t h = kFnvOffset;
  for (std::size_t d : t.shape()) {
    const std::uint64_t v = d;
    fnv(h, &v, sizeof v);
  }
  fnv(h, t.data().data(), t.size() * sizeof(double));
  return h;
}

std::uint64_t fingerprint(const EncoderParams& params) {
  const std::vector<std::uint8_t> bytes = serialize_encoder(params);
  std::uint64_t h = kFnvOffset;
  fnv(h, bytes.data(), bytes.size());
  return h;
}

bool CleanLatentCache::matches(const EncoderParams& params, const Tensor& x_clean) const {
  return !empty() && encoder_key_ == fingerprint(params) && image_key_ == fingerprint(x_clean);
}

bool CleanLatentCache::refresh(const EncoderParams& params, const Tensor& x_clean) {
  const std::uint64_t ek = fingerprint(params), ik = fingerprint(x_clean);
  if (!empty() && ek == encoder_key_ && ik == image_key_) return false;
  dist_ = encode(params, x_clean);
  sigma0_ = dist_.sigma();
  encoder_key_ = ek;
  image_key_ = ik;
  return true;
}

Var loss_mean(const CleanLatentCache& cache, const LatentVar& pert) {
  require_latent_match(cache, pert, "loss_mean");
  Tape& tape = pert.mu.tape();
  return sum(square(pert.mu - tape.constant(cache.mu0())));
}

Var loss_var(const CleanLatentCache& cache, const LatentVar& pert) {
  require_latent_match(cache, pert, "loss_var");
  Tape& tape = pert.mu.tape();
  Var sigma = exp(mul_const(pert.logvar, 0.5));
  return sum(square(sigma - tape.constant(cache.sigma0())));
}

Var loss_add(const CleanLatentCache& cache, const LatentVar& pert) {
  return loss_mean(cache, pert) + loss_var(cache, pert);
}

Var loss_add_log(const CleanLatentCache& cache, const LatentVar& pert, LogReduction reduction) {
  Var lm = loss_mean(cache, pert);
  Var gap = pert.logvar - pert.logvar.tape().constant(cache.logvar0());
  return lm + reduce(gap, reduction == LogReduction::sum ? Reduction::sum : Reduction::mean);
}

Var loss_sample(const CleanLatentCache& cache, const LatentVar& pert, const Tensor& eps1,
                const Tensor& eps2, const SigmaMode& mode) {
  require_latent_match(cache, pert, "loss_sample");
  require_same_shape(cache.mu0(), eps2, "loss_sample clean noise");
  Var z_pert = sample(pert, eps1, mode);
  const Tensor z_clean = sample(apply_sigma_mode(cache.dist(), mode), eps2);
  return sum(square(z_pert - pert.mu.tape().constant(z_clean)));
}

Var loss_sample(const CleanLatentCache& cache, const LatentVar& pert, Rng& rng, const SigmaMode& mode) {
  const Shape& s = pert.mu.shape();
  Tensor eps1 = rng.normal_tensor(s);
  Tensor eps2 = rng.normal_tensor(s);
  return loss_sample(cache, pert, eps1, eps2, mode);
}

Var loss_mean_targeted(const LatentVar& pert, const Tensor& mu_target) {
  require_same_shape(pert.mu.value(), mu_target, "loss_mean_targeted");
  return mul_const(sum(square(pert.mu - pert.mu.tape().constant(mu_target))), -1.0);
}

Var loss_combo(Var t_term, Var l_term, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("combo lambda must be >= 0");
  if (lambda == 0.0) return t_term;
  return t_term + mul_const(l_term, lambda);
}

Tensor checkerboard_target(const Shape& image_shape, std::size_t cell) {
  if (image_shape.size() != 3 || cell == 0) {
    throw ShapeError("checkerboard target needs a (C, H, W) shape and cell >= 1");
  }
  Tensor t(image_shape);
  for (std::size_t c = 0; c < image_shape[0]; ++c)
    for (std::size_t y = 0; y < image_shape[1]; ++y)
      for (std::size_t x = 0; x < image_shape[2]; ++x)
        t.at(c, y, x) = ((y / cell + x / cell) % 2 == 0) ? 1.0 : 0.0;
  return t;
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "mean") return LossKind::mean;
  if (name == "var") return LossKind::var;
  if (name == "sample") return LossKind::sample;
  if (name == "add") return LossKind::add;
  if (name == "add-log") return LossKind::add_log;
  if (name == "mean-target") return LossKind::mean_targeted;
  if (name == "combo-fsgm") return LossKind::combo_fsgm;
  if (name == "combo-aspl") return LossKind::combo_aspl;
  throw std::invalid_argument("unknown loss '" + std::string(name) +
                              "' (expected mean, var, sample, add, add-log, mean-target, combo-fsgm or combo-aspl)");
}

std::string_view loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::mean: return "mean";
    case LossKind::var: return "var";
    case LossKind::sample: return "sample";
    case LossKind::add: return "add";
    case LossKind::add_log: return "add-log";
    case LossKind::mean_targeted: return "mean-target";
    case LossKind::combo_fsgm: return "combo-fsgm";
    case LossKind::combo_aspl: return "combo-aspl";
  }
  return "unknown";
}

bool needs_denoiser(LossKind kind) { return kind == LossKind::combo_fsgm || kind == LossKind::combo_aspl; }

void LossSpec::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("loss lambda must be finite and >= 0");
}

Objective make_latent_objective(const EncoderParams& encoder, const Tensor& x_clean, const LossSpec& spec,
                                const SigmaMode& mode) {
  spec.validate();
  if (needs_denoiser(spec.kind)) {
    throw std::invalid_argument(std::string(loss_kind_name(spec.kind)) + " needs a surrogate denoiser");
  }
  auto cache = std::make_shared<const CleanLatentCache>(encoder, x_clean);
  Objective obj;
  obj.label = std::string(loss_kind_name(spec.kind));
  switch (spec.kind) {
    case LossKind::mean:
    case LossKind::var:
    case LossKind::add:
    case LossKind::add_log: {
      const LossKind kind = spec.kind;
      const LogReduction red = spec.log_reduction;
      obj.fn = [&encoder, cache, kind, red](Tape& tape, Var x, Rng&) {
        LatentVar z = encode(tape, encoder, x);
        Var l = kind == LossKind::mean  ? loss_mean(*cache, z)
                : kind == LossKind::var ? loss_var(*cache, z)
                : kind == LossKind::add ? loss_add(*cache, z)
                                        : loss_add_log(*cache, z, red);
        return ObjectiveEval{l, z};
      };
      break;
    }
    case LossKind::sample: {
      obj.stochastic = !spec.frozen_sample_noise;
      if (spec.frozen_sample_noise) {
        // One pair for the whole run, drawn from a stream tied to the image.
        Rng r(fingerprint(x_clean));
        auto eps1 = std::make_shared<const Tensor>(r.normal_tensor(cache->mu0().shape()));
        auto eps2 = std::make_shared<const Tensor>(r.normal_tensor(cache->mu0().shape()));
        obj.fn = [&encoder, cache, eps1, eps2, mode](Tape& tape, Var x, Rng&) {
          LatentVar z = encode(tape, encoder, x);
          return ObjectiveEval{loss_sample(*cache, z, *eps1, *eps2, mode), z};
        };
      } else {
        obj.fn = [&encoder, cache, mode](Tape& tape, Var x, Rng& rng) {
          LatentVar z = encode(tape, encoder, x);
          return ObjectiveEval{loss_sample(*cache, z, rng, mode), z};
        };
      }
      break;
    }
    case LossKind::mean_targeted: {
      const Tensor target = spec.target.empty() ? checkerboard_target(x_clean.shape()) : spec.target;
      if (target.shape() != x_clean.shape()) {
        throw ShapeError("target image " + to_string(target.shape()) + " does not match input " +
                         to_string(x_clean.shape()));
      }
      auto mu_t = std::make_shared<const Tensor>(encode(encoder, target).mu);
      obj.fn = [&encoder, mu_t](Tape& tape, Var x, Rng&) {
        LatentVar z = encode(tape, encoder, x);
        return ObjectiveEval{loss_mean_targeted(z, *mu_t), z};
      };
      break;
    }
    default: break;
  }
  return obj;
}

Objective make_denoiser_objective(const EncoderParams& encoder, const Tensor& x_clean,
                                  const DenoiserParams& denoiser, const NoiseSchedule& sched,
                                  PromptId prompt, double lambda, const SigmaMode& mode) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("combo lambda must be >= 0");
  if (prompt.id >= denoiser.shape.vocab_size) {
    throw std::invalid_argument("prompt id " + std::to_string(prompt.id) + " outside denoiser vocabulary");
  }
  std::shared_ptr<const CleanLatentCache> cache;
  if (lambda > 0.0) cache = std::make_shared<const CleanLatentCache>(encoder, x_clean);
  Objective obj;
  obj.stochastic = true;
  obj.label = lambda > 0.0 ? "combo" : "surrogate";
  obj.fn = [&encoder, &denoiser, &sched, cache, prompt, lambda, mode](Tape& tape, Var x, Rng& rng) {
    LatentVar z = encode(tape, encoder, x);
    const Shape& ls = z.mu.shape();
    Var z0 = sample(z, rng.normal_tensor(ls), mode);
    const NoiseDraw draw = draw_noise(rng, sched, ls);
    BoundDenoiser net = bind(tape, denoiser, false);
    Var t_term = denoise_loss(net, z0, prompt, draw, sched);
    if (lambda == 0.0) return ObjectiveEval{t_term, z};
    return ObjectiveEval{loss_combo(t_term, loss_add_log(*cache, z), lambda), z};
  };
  return obj;
}

}  // namespace lshield
