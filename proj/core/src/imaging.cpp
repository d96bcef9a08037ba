#include "latent_shield/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "latent_shield/attack.hpp"

namespace lshield {

namespace {

void check_rgb(const Tensor& x, const char* what) {
  if (x.rank() != 3) throw ShapeError(std::string(what) + " expects a (C, H, W) image, got " + to_string(x.shape()));
}

// Logistic edge: 1 inside (d < 1), 0 outside, transition width ~1/k.
double soft_inside(double d, double k) { return 1.0 / (1.0 + std::exp((d - 1.0) * k)); }

void blend(Tensor& img, std::size_t y, std::size_t x, const double color[3], double a) {
  for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = (1.0 - a) * img.at(c, y, x) + a * color[c];
}

void gradient_background(Tensor& img, Rng& rng, double lo, double hi) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(lo, hi);
    c1[c] = rng.uniform(lo, hi);
  }
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double dx = std::cos(angle), dy = std::sin(angle);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double u = ((x + 0.5) / w - 0.5) * dx + ((y + 0.5) / h - 0.5) * dy;
      const double t = std::clamp(u + 0.5, 0.0, 1.0);
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = (1.0 - t) * c0[c] + t * c1[c];
    }
}

void ellipse(Tensor& img, double cy, double cx, double ry, double rx, const double color[3], double sharp) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double py = (y + 0.5) / h - cy, px = (x + 0.5) / w - cx;
      const double d = std::sqrt((py * py) / (ry * ry) + (px * px) / (rx * rx));
      const double a = soft_inside(d, sharp);
      if (a > 1e-4) blend(img, y, x, color, a);
    }
}

}  // namespace

CorruptionSpec CorruptionSpec::resize_crop(double scale_min, double scale_max, std::uint64_t seed) {
  CorruptionSpec s;
  s.kind = Kind::resize_crop;
  s.scale_min = scale_min;
  s.scale_max = scale_max;
  s.seed = seed;
  return s;
}

CorruptionSpec CorruptionSpec::smooth_uniform(double amplitude, std::uint64_t seed) {
  CorruptionSpec s;
  s.kind = Kind::smooth_uniform;
  s.amplitude = amplitude;
  s.seed = seed;
  return s;
}

CorruptionSpec CorruptionSpec::gaussian_denoise(double sigma) {
  CorruptionSpec s;
  s.kind = Kind::gaussian_denoise;
  s.sigma = sigma;
  return s;
}

CorruptionSpec CorruptionSpec::jpeg(int quality) {
  CorruptionSpec s;
  s.kind = Kind::jpeg;
  s.quality = quality;
  return s;
}

void CorruptionSpec::validate() const {
  switch (kind) {
    case Kind::resize_crop:
      if (!(scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0)) {
        throw std::invalid_argument("resize_crop scale range must satisfy 0 < min <= max <= 1");
      }
      break;
    case Kind::smooth_uniform:
      if (!(amplitude >= 0.0)) throw std::invalid_argument("smooth_uniform amplitude must be >= 0");
      break;
    case Kind::gaussian_denoise:
      if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_denoise sigma must be > 0");
      break;
    case Kind::jpeg:
      if (quality < 1 || quality > 100) throw std::invalid_argument("JPEG quality must lie in [1, 100]");
      break;
  }
}

std::string CorruptionSpec::label() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::resize_crop: os << "resize_crop(" << scale_min << "-" << scale_max << ")"; break;
    case Kind::smooth_uniform: os << "smooth_uniform(" << amplitude << ")"; break;
    case Kind::gaussian_denoise: os << "gaussian_denoise(" << sigma << ")"; break;
    case Kind::jpeg: os << "jpeg(" << quality << ")"; break;
  }
  return os.str();
}

Tensor resize_bilinear(const Tensor& x, std::size_t height, std::size_t width) {
  check_rgb(x, "resize_bilinear");
  if (height == 0 || width == 0) throw ShapeError("resize target must be non-empty");
  const std::size_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out(Shape{ch, height, width});
  const double sy = static_cast<double>(h) / height, sx = static_cast<double>(w) / width;
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (std::size_t xx = 0; xx < width; ++xx) {
      const double fx = std::clamp((xx + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      for (std::size_t c = 0; c < ch; ++c) {
        const double top = (1.0 - tx) * x.at(c, y0, x0) + tx * x.at(c, y0, x1);
        const double bot = (1.0 - tx) * x.at(c, y1, x0) + tx * x.at(c, y1, x1);
        out.at(c, y, xx) = (1.0 - ty) * top + ty * bot;
      }
    }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("Gaussian sigma must be > 0");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double total = 0.0;
  for (int i = -r; i <= r; ++i) total += k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  for (double& v : k) v /= total;
  return k;
}

Tensor gaussian_blur(const Tensor& x, double sigma) {
  check_rgb(x, "gaussian_blur");
  const std::vector<double> k = gaussian_kernel(sigma);
  const long r = static_cast<long>(k.size() / 2);
  const long ch = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor tmp(x.shape()), out(x.shape());
  for (long c = 0; c < ch; ++c)
    for (long y = 0; y < h; ++y)
      for (long xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (long i = -r; i <= r; ++i) acc += k[i + r] * x.at(c, y, std::clamp(xx + i, 0L, w - 1));
        tmp.at(c, y, xx) = acc;
      }
  for (long c = 0; c < ch; ++c)
    for (long y = 0; y < h; ++y)
      for (long xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (long i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(c, std::clamp(y + i, 0L, h - 1), xx);
        out.at(c, y, xx) = acc;
      }
  return clamp(out, 0.0, 1.0);
}

Tensor corrupt(const Tensor& x, const CorruptionSpec& spec) {
  spec.validate();
  check_rgb(x, "corrupt");
  switch (spec.kind) {
    case CorruptionSpec::Kind::resize_crop: {
      Rng rng(spec.seed);
      const double s = rng.uniform(spec.scale_min, spec.scale_max);
      const std::size_t h = x.dim(1), w = x.dim(2);
      const std::size_t ch = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(s * h)), 1, h);
      const std::size_t cw = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(s * w)), 1, w);
      const std::size_t oy = rng.below(h - ch + 1), ox = rng.below(w - cw + 1);
      Tensor crop(Shape{x.dim(0), ch, cw});
      for (std::size_t c = 0; c < x.dim(0); ++c)
        for (std::size_t y = 0; y < ch; ++y)
          for (std::size_t xx = 0; xx < cw; ++xx) crop.at(c, y, xx) = x.at(c, oy + y, ox + xx);
      return clamp(resize_bilinear(crop, h, w), 0.0, 1.0);
    }
    case CorruptionSpec::Kind::smooth_uniform: {
      Rng rng(spec.seed);
      Tensor out = x;
      for (double& v : out.data()) v += rng.uniform(-spec.amplitude, spec.amplitude);
      return clamp(out, 0.0, 1.0);
    }
    case CorruptionSpec::Kind::gaussian_denoise: return gaussian_blur(x, spec.sigma);
    case CorruptionSpec::Kind::jpeg: return quantize_roundtrip(clamp(x, 0.0, 1.0), Roundtrip::jpeg(spec.quality));
  }
  return x;
}

double ssim(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "ssim");
  check_rgb(x, "ssim");
  constexpr std::size_t kWin = 11;
  constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  const std::size_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h < kWin || w < kWin) throw ShapeError("ssim needs images of at least 11x11, got " + to_string(x.shape()));
  const std::vector<double> g = gaussian_kernel(1.5);
  // ceil(3 * 1.5) = 5 gives exactly the 11 taps of the standard window.
  double window[kWin][kWin];
  for (std::size_t i = 0; i < kWin; ++i)
    for (std::size_t j = 0; j < kWin; ++j) window[i][j] = g[i] * g[j];

  double total = 0.0;
  for (std::size_t c = 0; c < ch; ++c) {
    double sum_c = 0.0;
    for (std::size_t oy = 0; oy + kWin <= h; ++oy)
      for (std::size_t ox = 0; ox + kWin <= w; ++ox) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (std::size_t i = 0; i < kWin; ++i)
          for (std::size_t j = 0; j < kWin; ++j) {
            const double a = x.at(c, oy + i, ox + j), b = y.at(c, oy + i, ox + j), wt = window[i][j];
            mx += wt * a;
            my += wt * b;
            sxx += wt * a * a;
            syy += wt * b * b;
            sxy += wt * a * b;
          }
        const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
        const double num = (2.0 * (mx * my) + kC1) * (2.0 * cov + kC2);
        const double den = (mx * mx + my * my + kC1) * (vx + vy + kC2);
        sum_c += num / den;
      }
    total += sum_c / static_cast<double>((h - kWin + 1) * (w - kWin + 1));
  }
  return total / static_cast<double>(ch);
}

double psnr(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "psnr");
  const double mse = sum_squared_diff(x, y) / static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double psnr_capped(const Tensor& x, const Tensor& y) { return std::min(psnr(x, y), kPsnrCap); }

Tensor synthetic_natural_image(Rng& rng, std::size_t height, std::size_t width) {
  Tensor img(Shape{3, height, width});
  gradient_background(img, rng, 0.1, 0.9);
  const std::size_t blobs = 3 + rng.below(4);
  for (std::size_t b = 0; b < blobs; ++b) {
    const double color[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
    ellipse(img, rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.08, 0.3), rng.uniform(0.08, 0.3),
            color, rng.uniform(4.0, 16.0));
  }
  const double fy = rng.uniform(0.5, 3.0), fx = rng.uniform(0.5, 3.0);
  for (std::size_t c = 0; c < 3; ++c) {
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        img.at(c, y, x) += 0.04 * std::sin(fy * y + fx * x + phase);
  }
  return clamp(img, 0.0, 1.0);
}

SubjectStyle random_subject(Rng& rng) {
  SubjectStyle s{};
  const double tone = rng.uniform(0.35, 0.9);
  s.skin[0] = std::min(1.0, tone + 0.08);
  s.skin[1] = tone * rng.uniform(0.7, 0.85);
  s.skin[2] = tone * rng.uniform(0.55, 0.75);
  const double hair = rng.uniform(0.05, 0.7);
  s.hair[0] = hair;
  s.hair[1] = hair * rng.uniform(0.6, 0.9);
  s.hair[2] = hair * rng.uniform(0.3, 0.7);
  s.eye_spacing = rng.uniform(0.3, 0.5);
  s.face_aspect = rng.uniform(0.7, 0.9);
  return s;
}

Tensor synthetic_subject_image(const SubjectStyle& subject, Rng& rng, std::size_t height, std::size_t width) {
  Tensor img(Shape{3, height, width});
  gradient_background(img, rng, 0.15, 0.85);
  const double cy = 0.55 + rng.uniform(-0.05, 0.05), cx = 0.5 + rng.uniform(-0.06, 0.06);
  const double ry = 0.3 * rng.uniform(0.9, 1.1), rx = ry * subject.face_aspect;
  const double light = rng.uniform(-0.06, 0.06);
  double skin[3], hair[3];
  for (int c = 0; c < 3; ++c) {
    skin[c] = std::clamp(subject.skin[c] + light, 0.0, 1.0);
    hair[c] = std::clamp(subject.hair[c] + light, 0.0, 1.0);
  }
  ellipse(img, cy - 0.3 * ry, cx, ry * 0.95, rx * 1.15, hair, 10.0);
  ellipse(img, cy, cx, ry, rx, skin, 12.0);
  const double dark[3] = {0.08, 0.06, 0.05};
  const double eye_y = cy - 0.15 * ry, eye_dx = subject.eye_spacing * rx;
  ellipse(img, eye_y, cx - eye_dx, 0.07 * ry, 0.09 * rx, dark, 6.0);
  ellipse(img, eye_y, cx + eye_dx, 0.07 * ry, 0.09 * rx, dark, 6.0);
  const double lips[3] = {0.55, 0.2, 0.2};
  ellipse(img, cy + 0.45 * ry, cx, 0.06 * ry, 0.3 * rx, lips, 6.0);
  return clamp(img, 0.0, 1.0);
}

}  // namespace lshield
