// Acceptance run: one PASS/FAIL line per criterion, with the measured numbers
// behind each verdict. Oracles here are computed independently of the library
// code under test wherever that is possible.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "config.hpp"
#include "latent_shield/analytics.hpp"
#include "latent_shield/attack.hpp"
#include "latent_shield/gradient_suite.hpp"
#include "latent_shield/image_io.hpp"
#include "latent_shield/imaging.hpp"
#include "latent_shield/losses.hpp"
#include "latent_shield/robustness.hpp"

using namespace lshield;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
  /// Fails the run even for a criterion listed as a known failure.
  bool regression = false;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// One-sided P(X >= k) for X ~ Binomial(n, 1/2).
double sign_test_p(int k, int n) {
  double p = 0.0;
  for (int i = k; i <= n; ++i) p += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) -
                                           n * std::log(2.0));
  return p;
}

Tensor natural_image(std::uint64_t seed, std::size_t side) {
  Rng rng(seed);
  return synthetic_natural_image(rng, side, side);
}

// 1. Gradient suite.

Verdict gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  int checks = 0, failed = 0;
  double worst = 0.0;
  std::string first_failure;
  for (EncoderPreset preset : {EncoderPreset::tiny8x, EncoderPreset::micro4x}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const EncoderParams enc = init_encoder(seed, preset);
      for (const SuiteEntry& e : run_gradient_suite(enc, seed, 1e-4)) {
        ++checks;
        worst = std::max(worst, e.report.rel_err);
        if (!e.report.pass) {
          ++failed;
          if (first_failure.empty()) first_failure = " first=" + e.loss + "/seed" + std::to_string(seed);
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs < 120.0, std::to_string(checks) + " checks, " + std::to_string(failed) +
                                           " failed, worst rel_err " + fmt("%.2e", worst) + ", " +
                                           fmt("%.1f", secs) + " s (limit 120)" + first_failure};
}

// 2. Exact zeros at delta = 0.

Verdict zero_identities() {
  int evaluated = 0, nonzero = 0;
  for (EncoderPreset preset : {EncoderPreset::tiny8x, EncoderPreset::micro4x}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const EncoderParams enc = init_encoder(seed, preset);
      const Tensor x = natural_image(100 + seed, 32);
      const CleanLatentCache cache(enc, x);
      Tape tape;
      const LatentVar z = encode(tape, enc, tape.leaf(x));
      Rng rng(seed);
      const Tensor eps = rng.normal_tensor(cache.mu0().shape());
      for (const Var& v : {loss_mean(cache, z), loss_var(cache, z), loss_add(cache, z), loss_add_log(cache, z),
                           loss_sample(cache, z, eps, eps)}) {
        ++evaluated;
        if (v.value().item() != 0.0) ++nonzero;
      }
    }
  }
  return {nonzero == 0, std::to_string(evaluated) + " loss evaluations, " + std::to_string(nonzero) + " not exactly 0"};
}

// 3. Budget and box at every step.

Verdict budget_feasibility() {
  const EncoderParams enc = init_encoder(7, EncoderPreset::micro4x);
  DenoiserShape shape;
  shape.latent_channels = enc.latent_channels();
  shape.hidden = 4;
  const NoiseSchedule sched = make_schedule(50, 1e-4, 0.02);
  const LossKind latent_kinds[] = {LossKind::mean, LossKind::var,     LossKind::sample,
                                   LossKind::add,  LossKind::add_log, LossKind::mean_targeted};
  Rng meta(2024);
  int runs = 0, violations = 0, checked_iterates = 0, checked_records = 0;
  auto check_record_budget = [&](const Trajectory& t, double eps) {
    for (const TrajectoryRecord& r : t.steps) {
      ++checked_records;
      if (!(r.delta_linf <= eps)) ++violations;
    }
  };
  auto check_final = [&](const Tensor& x, const ProtectedResult& r, double eps) {
    if (!(max_abs(r.delta) <= eps)) ++violations;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = r.x_protected[i];
      if (!(v >= 0.0 && v <= 1.0)) ++violations;
    }
  };

  for (; runs < 100; ++runs) {
    const std::uint64_t seed = meta.below(1u << 30);
    Rng rng(seed);
    const Tensor x = rng.uniform_tensor({3, 8, 8}, 0.0, 1.0);
    AttackConfig cfg;
    cfg.epsilon = rng.uniform(0.0, 0.1);
    cfg.step_size = std::max(1e-6, cfg.epsilon * rng.uniform(0.05, 1.0));
    cfg.iterations = 5 + rng.below(40);
    cfg.seed = seed;
    cfg.quantize = rng.uniform() < 0.5 ? QuantizeMode::png8 : QuantizeMode::none;
    const double eps = cfg.epsilon;

    if (runs % 3 == 0) {
      // PGD through a wrapper that sees every iterate the attack evaluates.
      cfg.loss.kind = latent_kinds[rng.below(6)];
      const Objective inner = make_latent_objective(enc, x, cfg.loss);
      Objective watched = inner;
      watched.fn = [&](Tape& tape, Var xp, Rng& r) {
        ++checked_iterates;
        const Tensor& v = xp.value();
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (!(v[i] >= 0.0 && v[i] <= 1.0) || !(std::fabs(v[i] - x[i]) <= eps + 1e-15)) ++violations;
        }
        return inner(tape, xp, r);
      };
      Trajectory traj;
      Rng attack_rng(seed);
      const Tensor delta = run_pgd(enc, x, watched, cfg, attack_rng, PgdSegment{}, traj);
      check_record_budget(traj, eps);
      if (!(max_abs(delta) <= eps)) ++violations;
      const ProtectedResult r = pgd_protect(enc, x, cfg);
      check_record_budget(r.trajectory, eps);
      check_final(x, r, eps);
      continue;
    }
    SurrogateSetup setup{init_denoiser(seed, shape), sched, {}};
    setup.train.steps = 2;
    setup.train.lr = 1e-3;
    const std::vector<Tensor> images{x};
    std::vector<ProtectedResult> out;
    if (runs % 3 == 1) {
      cfg.loss.kind = rng.uniform() < 0.5 ? LossKind::combo_fsgm : LossKind::mean;
      out = fsgm_protect(enc, images, PromptId{0}, cfg, setup);
    } else {
      cfg.loss.kind = rng.uniform() < 0.5 ? LossKind::combo_aspl : LossKind::mean;
      const AsplSchedule sch{1 + rng.below(4), 1, 1 + rng.below(5)};
      out = aspl_protect(enc, images, PromptId{0}, cfg, sch, setup);
    }
    check_record_budget(out[0].trajectory, eps);
    check_final(x, out[0], eps);
  }
  return {violations == 0, std::to_string(runs) + " runs (pgd/fsgm/aspl), " + std::to_string(checked_iterates) +
                               " PGD iterates and " + std::to_string(checked_records) +
                               " trajectory records checked, " + std::to_string(violations) + " violations"};
}

// 4. Brute-force oracle on tiny images.

struct LinearCase {
  std::size_t side, patch, latents;
};

// Exhaustive optimum of ||W delta||^2 over the per-channel grid {k eps / 50}
// intersected with the pixel box. Patch 1 separates per pixel (101^3 points
// each); a single-latent 2x2 patch is a squared linear form whose maximum is
// reached by maximizing s * w . delta coordinatewise for s = +1 or -1.
double grid_optimum(const Tensor& w, const Tensor& x, const LinearCase& c, double eps) {
  const int n = 50;
  auto level = [&](int k) { return eps * k / n; };
  auto feasible = [&](std::size_t i, double d) { return x[i] + d >= 0.0 && x[i] + d <= 1.0; };
  if (c.patch == 1) {
    const std::size_t hw = c.side * c.side;
    double total = 0.0;
    for (std::size_t p = 0; p < hw; ++p) {
      double best = 0.0;
      for (int a = -n; a <= n; ++a) {
        if (!feasible(p, level(a))) continue;
        for (int b = -n; b <= n; ++b) {
          if (!feasible(hw + p, level(b))) continue;
          for (int e = -n; e <= n; ++e) {
            if (!feasible(2 * hw + p, level(e))) continue;
            const double d[3] = {level(a), level(b), level(e)};
            double s = 0.0;
            for (std::size_t l = 0; l < c.latents; ++l) {
              double m = 0.0;
              for (int ch = 0; ch < 3; ++ch) m += w[l * 3 + ch] * d[ch];
              s += m * m;
            }
            best = std::max(best, s);
          }
        }
      }
      total += best;
    }
    return total;
  }
  double best = 0.0;
  for (double sgn : {1.0, -1.0}) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double m = -1e300;
      for (int k = -n; k <= n; ++k)
        if (feasible(i, level(k))) m = std::max(m, sgn * w[i] * level(k));
      s += m;
    }
    best = std::max(best, s * s);
  }
  return best;
}

Verdict brute_force_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const LinearCase cases[] = {{1, 1, 1}, {1, 1, 2}, {1, 1, 3}, {2, 1, 1}, {2, 1, 2}, {2, 2, 1}};
  Rng rng(99);
  int instances = 0, below_clipped = 0, below_open = 0;
  double worst = 1e300, worst_open = 1e300;
  for (int rep = 0; rep < 5; ++rep) {
    for (const LinearCase& c : cases) {
      const Tensor w = rng.uniform_tensor({c.latents, 3, c.patch, c.patch}, 0.1, 1.5);
      const EncoderParams lin = make_linear_encoder(w, Tensor({c.latents}, 0.0),
                                                    Tensor({c.latents, 3, c.patch, c.patch}, 0.0),
                                                    Tensor({c.latents}, 0.0));
      const Tensor x = rng.uniform_tensor({3, c.side, c.side}, 0.0, 1.0);
      AttackConfig cfg;
      cfg.loss.kind = LossKind::mean;
      cfg.iterations = 1000;
      cfg.step_size = cfg.epsilon / 10.0;
      cfg.quantize = QuantizeMode::none;
      const ProtectedResult r = pgd_protect(lin, x, cfg);
      const CleanLatentCache cache(lin, x);
      Tape tape;
      const double got = loss_mean(cache, encode(tape, lin, tape.leaf(r.x_protected))).value().item();
      const double opt = grid_optimum(w, x, c, cfg.epsilon);
      const double ratio = opt > 0.0 ? got / opt : 1.0;
      worst = std::min(worst, ratio);
      ++instances;
      // With delta starting at 0 and sign(0) = +1, PGD settles on the +delta
      // branch of this even loss. That branch is only the global optimum when
      // the box does not clip it, so shortfalls are split by that condition.
      const bool clipped = std::any_of(x.data().begin(), x.data().end(), [&](double v) { return v > 1.0 - cfg.epsilon; });
      if (ratio < 0.99) ++(clipped ? below_clipped : below_open);
      if (!clipped) worst_open = std::min(worst_open, ratio);
    }
  }
  const double secs = seconds_since(t0);
  return {below_clipped + below_open == 0 && secs < 60.0,
          std::to_string(instances) + " instances, worst PGD/grid ratio " + fmt("%.4f", worst) + "; below 0.99: " +
              std::to_string(below_clipped) + " with the +delta branch clipped by the box, " +
              std::to_string(below_open) + " otherwise (worst unclipped ratio " + fmt("%.4f", worst_open) + "), " +
              fmt("%.1f", secs) + " s (limit 60)",
          below_open > 0 || secs >= 60.0};
}

// 5. Mean-shift and logvar-gap direction.

Verdict shift_direction() {
  const auto t0 = std::chrono::steady_clock::now();
  double addlog_mu = 0.0, addlog_gap = 0.0, base_mu = 0.0, base_gap = 0.0;
  int pairs = 0, mean_smaller = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const EncoderParams enc = init_encoder(seed, EncoderPreset::tiny8x);
    for (std::uint64_t img = 0; img < 10; ++img) {
      const Tensor x = natural_image(500 + img, 32);
      AttackConfig cfg;
      cfg.seed = seed;
      cfg.loss.kind = LossKind::add_log;
      const ShiftStats a = latent_shift(enc, x, pgd_protect(enc, x, cfg).x_protected);
      cfg.loss.kind = LossKind::mean;
      const ShiftStats m = latent_shift(enc, x, pgd_protect(enc, x, cfg).x_protected);

      // Equal-budget uniform noise, stored the same way as the attacks.
      Rng noise(seed * 1000 + img);
      Tensor delta = noise.uniform_tensor(x.shape(), -cfg.epsilon, cfg.epsilon);
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = std::clamp(x[i] + delta[i], 0.0, 1.0) - x[i];
      const ShiftStats u = latent_shift(enc, x, x + quantize_delta_png8(x, delta, cfg.epsilon));

      addlog_mu += a.mu_shift_l2sq;
      addlog_gap += std::fabs(a.logvar_gap_mean);
      base_mu += u.mu_shift_l2sq;
      base_gap += std::fabs(u.logvar_gap_mean);
      ++pairs;
      if (std::fabs(m.logvar_gap_mean) < std::fabs(a.logvar_gap_mean)) ++mean_smaller;
    }
  }
  const double mu_ratio = addlog_mu / base_mu, gap_ratio = addlog_gap / base_gap;
  const double p = sign_test_p(mean_smaller, pairs);
  const double secs = seconds_since(t0);
  const bool pass = mu_ratio >= 10.0 && gap_ratio >= 10.0 && mean_smaller == pairs && p < 0.05 && secs < 600.0;
  return {pass, "add-log/uniform mean-shift x" + fmt("%.1f", mu_ratio) + ", |logvar-gap| x" + fmt("%.1f", gap_ratio) +
                    "; mean-loss gap smaller on " + std::to_string(mean_smaller) + "/" + std::to_string(pairs) +
                    " pairs, sign test p=" + fmt("%.2e", p) + ", " + fmt("%.1f", secs) + " s (limit 600)"};
}

// Settings shared by the two fine-tuning experiments.
ExperimentConfig experiment_config() {
  ExperimentConfig cfg;
  cfg.pid.iterations = 100;
  cfg.fsgm.iterations = 100;
  cfg.surrogate_steps = 200;
  cfg.aspl_schedule = {10, 3, 6};
  return cfg;
}

double protected_loss(const ExperimentReport& r, const std::string& defense, std::uint64_t seed) {
  for (const ExperimentRow& row : r.rows)
    if (row.defense == defense && row.seed == seed) return row.loss_protected_trained;
  throw std::logic_error("missing row " + defense);
}

// 6. Fine-tuning on PID data vs clean and random.

Verdict finetune_ordering(const EncoderParams& enc) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = experiment_config();
  cfg.defenses = {Defense::none, Defense::random_noise, Defense::pid};
  cfg.c_explo = {cfg.c_prot};
  const ExperimentReport r = run_mismatch_experiment(enc, cfg);
  int wins = 0;
  std::ostringstream per_seed;
  for (std::uint64_t s : cfg.seeds) {
    const double clean = protected_loss(r, "none", s), random = protected_loss(r, "random", s),
                 pid = protected_loss(r, "pid", s);
    if (pid > clean && pid > random) ++wins;
    per_seed << " [" << s << ": " << fmt("%.3f", clean) << "/" << fmt("%.3f", random) << "/" << fmt("%.3f", pid)
             << "]";
  }
  return {wins >= 4, "pid beats clean and random on " + std::to_string(wins) + "/" +
                         std::to_string(cfg.seeds.size()) + " seeds, clean/random/pid:" + per_seed.str() + ", " +
                         fmt("%.1f", seconds_since(t0)) + " s"};
}

// 7. Prompt mismatch.

Verdict prompt_mismatch(const EncoderParams& enc) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = experiment_config();
  cfg.defenses = {Defense::fsgm, Defense::aspl, Defense::pid};
  const ExperimentReport r = run_mismatch_experiment(enc, cfg);
  const auto gaps = mismatch_gaps(r, cfg.c_prot);
  auto shrink = [&](const std::string& d, std::uint64_t s) {
    for (const MismatchGap& g : gaps)
      if (g.defense == d && g.seed == s) return g.relative_shrink;
    return std::nan("");
  };
  int fsgm_wins = 0, aspl_wins = 0;
  std::ostringstream per_seed;
  for (std::uint64_t s : cfg.seeds) {
    const double f = shrink("fsgm", s), a = shrink("aspl", s), p = shrink("pid", s);
    if (f > p) ++fsgm_wins;
    if (a > p) ++aspl_wins;
    per_seed << " [" << s << ": " << fmt("%+.3f", f) << "/" << fmt("%+.3f", a) << "/" << fmt("%+.3f", p) << "]";
  }
  return {fsgm_wins >= 4 && aspl_wins >= 4,
          "shrink larger than pid: fsgm " + std::to_string(fsgm_wins) + "/5, aspl " + std::to_string(aspl_wins) +
              "/5; relative shrink fsgm/aspl/pid:" + per_seed.str() + ", " + fmt("%.1f", seconds_since(t0)) + " s"};
}

// 8. Sigma modes.

Verdict sigma_modes() {
  int checks = 0, failures = 0;
  auto expect = [&](bool ok) {
    ++checks;
    if (!ok) ++failures;
  };
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const EncoderParams enc = init_encoder(seed, seed % 2 ? EncoderPreset::tiny8x : EncoderPreset::micro4x);
    const Tensor x = natural_image(700 + seed, 32);
    AttackConfig cfg;
    cfg.iterations = 20;
    const Tensor xp = pgd_protect(enc, x, cfg).x_protected;
    const LatentDistribution clean = encode(enc, x), pert = encode(enc, xp);

    // Zero sigma: mean untouched bit for bit, variance channel gone.
    const ResolvedLatent zc = apply_sigma_mode(clean, SigmaMode::zero());
    const ResolvedLatent zp = apply_sigma_mode(pert, SigmaMode::zero());
    expect(zp.mu == pert.mu && zc.mu == clean.mu);
    expect(std::all_of(zp.sigma.data().begin(), zp.sigma.data().end(), [](double s) { return s == 0.0; }));
    const ShiftStats nat = latent_shift(clean, pert), zero = latent_shift(zc, zp);
    expect(zero.mu_shift_l2sq == nat.mu_shift_l2sq);
    expect(zero.sigma_shift_l2sq == 0.0 && zero.logvar_gap_mean == 0.0);
    Rng rng(seed);
    const Tensor noise = rng.normal_tensor(pert.mu.shape());
    expect(sample(zp, noise) == pert.mu);
    Tape tape;
    const LatentVar lv{tape.leaf(pert.mu), tape.leaf(pert.logvar)};
    tape.backward(sum(square(sample(lv, noise, SigmaMode::zero()))));
    const Tensor g = tape.grad(lv.logvar);
    expect(std::all_of(g.data().begin(), g.data().end(), [](double v) { return v == 0.0; }));

    // Clip at 1e-7 against fixed 1e-7, elementwise where natural sigma is above.
    LatentDistribution mixed = pert;
    for (std::size_t i = 0; i < mixed.logvar.size(); i += 3) mixed.logvar[i] = -40.0;
    for (const LatentDistribution* d : {&pert, static_cast<const LatentDistribution*>(&mixed)}) {
      const Tensor s = d->sigma();
      const ResolvedLatent c = apply_sigma_mode(*d, SigmaMode::clipped(1e-7));
      const ResolvedLatent f = apply_sigma_mode(*d, SigmaMode::fixed(1e-7));
      for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] > 1e-7) expect(c.sigma[i] == f.sigma[i]);
    }
  }
  return {failures == 0, std::to_string(checks) + " exact checks, " + std::to_string(failures) + " failed"};
}

// 9. Quantization.

Verdict quantization() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const Tensor x = rng.uniform_tensor({3, 24, 24}, 0.0, 1.0);
    worst = std::max(worst, max_abs_diff(quantize_roundtrip(x, Roundtrip::png8()), x));
    worst = std::max(worst, max_abs_diff(decode_png(encode_png(x)), x));
  }
  const EncoderParams enc = init_encoder(1, EncoderPreset::tiny8x);
  int reduced = 0;
  std::ostringstream per_image;
  for (std::uint64_t img = 0; img < 5; ++img) {
    const Tensor x = natural_image(900 + img, 32);
    AttackConfig cfg;
    cfg.quantize = QuantizeMode::none;
    const Tensor xp = pgd_protect(enc, x, cfg).x_protected;
    const double png = latent_shift(enc, x, quantize_roundtrip(xp, Roundtrip::png8())).mu_shift_l2sq;
    const double jpg = latent_shift(enc, x, quantize_roundtrip(xp, Roundtrip::jpeg(75))).mu_shift_l2sq;
    if (jpg < png) ++reduced;
    per_image << " " << fmt("%.3g", jpg / png);
  }
  return {worst <= 1.0 / 510.0 && reduced >= 4,
          "png8 worst error " + fmt("%.6f", worst) + " (bound " + fmt("%.6f", 1.0 / 510.0) +
              "); jpeg75 below png8 on " + std::to_string(reduced) + "/5, jpeg/png8 mean-shift ratios:" +
              per_image.str()};
}

// 10. Metric identities.

Verdict metric_identities() {
  const Tensor x = natural_image(42, 32);
  const bool ssim_one = ssim(x, x) == 1.0;
  Tensor offset = Tensor({3, 32, 32}, 0.5);
  Tensor shifted = offset;
  for (double& v : shifted.data()) v += 1.0 / 255.0;
  const double p = psnr(offset, shifted);
  Rng rng(3);
  const Tensor y = clamp(x + rng.uniform_tensor(x.shape(), -0.08, 0.08), 0.0, 1.0);
  const double asym = std::fabs(ssim(x, y) - ssim(y, x));
  return {ssim_one && std::fabs(p - 48.13) <= 0.01 && asym <= 1e-12,
          std::string("ssim(x,x)==1 ") + (ssim_one ? "yes" : "no") + ", psnr " + fmt("%.4f", p) +
              " dB, ssim asymmetry " + fmt("%.1e", asym)};
}

// 11. Determinism of protect.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Verdict protect_determinism() {
  const fs::path root = fs::temp_directory_path() / "lshield_acceptance_protect";
  fs::remove_all(root);
  fs::create_directories(root / "in");
  for (std::uint64_t i = 0; i < 3; ++i) write_png(root / "in" / ("img" + std::to_string(i) + ".png"), natural_image(i + 1, 32));
  cli::RunConfig cfg = cli::protect_defaults();
  cfg.apply({{"protect.steps", "50"}, {"protect.seed", "11"}});
  std::ostringstream out, err;
  const cli::Streams io{out, err};
  const int a = cli::cmd_protect(cfg, root / "in", root / "a", io);
  const int b = cli::cmd_protect(cfg, root / "in", root / "b", io);
  int files = 0, differ = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    ++files;
    if (slurp(e.path()) != slurp(root / "b" / e.path().filename())) ++differ;
  }
  fs::remove_all(root);
  return {a == 0 && b == 0 && files > 0 && differ == 0,
          std::to_string(files) + " output files compared across two runs, " + std::to_string(differ) +
              " differ; verified on this machine only, the cross-machine half needs a second host"};
}

}  // namespace

int main() {
  // Criteria the implemented algorithms do not meet. They are
  // still run and reported; see the README.
  const std::set<int> known_failures{4, 7};

  const EncoderParams enc = init_encoder(1, EncoderPreset::tiny8x);
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient suite", gradient_suite},
      {"zero-perturbation identities", zero_identities},
      {"budget and box feasibility", budget_feasibility},
      {"brute-force oracle", brute_force_oracle},
      {"add-log shift direction", shift_direction},
      {"fine-tuning ordering", [&] { return finetune_ordering(enc); }},
      {"prompt mismatch", [&] { return prompt_mismatch(enc); }},
      {"sigma modes", sigma_modes},
      {"quantization bounds", quantization},
      {"metric identities", metric_identities},
      {"protect determinism", protect_determinism},
  };

  int unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const bool known = known_failures.count(id) > 0;
    if (v.pass == known || v.regression) ++unexpected;
    std::printf("criterion %2d %-30s %s%s  %s\n", id, criteria[i].first.c_str(), v.pass ? "PASS" : "FAIL",
                known ? (v.pass ? " (listed as known failure)" : " (known)") : "", v.detail.c_str());
    std::fflush(stdout);
  }
  return unexpected == 0 ? 0 : 1;
}
