#include "latent_shield/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lshield {

namespace {

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double parse_double(const std::string& field, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != field.size()) {
    throw std::invalid_argument("trajectory CSV line " + std::to_string(line) + ": bad number '" + field + "'");
  }
  return v;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

ShiftStats latent_shift(const LatentDistribution& clean, const LatentDistribution& pert) {
  require_same_shape(clean.mu, pert.mu, "latent_shift");
  require_same_shape(clean.logvar, pert.logvar, "latent_shift");
  ShiftStats s;
  double gap = 0.0;
  for (std::size_t i = 0; i < clean.mu.size(); ++i) {
    const double dm = pert.mu[i] - clean.mu[i];
    const double ds = std::exp(0.5 * pert.logvar[i]) - std::exp(0.5 * clean.logvar[i]);
    s.mu_shift_l2sq += dm * dm;
    s.sigma_shift_l2sq += ds * ds;
    gap += pert.logvar[i] - clean.logvar[i];
  }
  s.logvar_gap_mean = gap / static_cast<double>(clean.mu.size());
  return s;
}

ShiftStats latent_shift(const ResolvedLatent& clean, const ResolvedLatent& pert) {
  require_same_shape(clean.mu, pert.mu, "latent_shift");
  require_same_shape(clean.sigma, pert.sigma, "latent_shift");
  ShiftStats s;
  double gap = 0.0;
  for (std::size_t i = 0; i < clean.mu.size(); ++i) {
    const double dm = pert.mu[i] - clean.mu[i];
    const double ds = pert.sigma[i] - clean.sigma[i];
    s.mu_shift_l2sq += dm * dm;
    s.sigma_shift_l2sq += ds * ds;
    if (pert.sigma[i] != clean.sigma[i]) gap += 2.0 * (std::log(pert.sigma[i]) - std::log(clean.sigma[i]));
  }
  s.logvar_gap_mean = gap / static_cast<double>(clean.mu.size());
  return s;
}

ShiftStats latent_shift(const EncoderParams& encoder, const Tensor& x, const Tensor& x_pert) {
  if (x.shape() != x_pert.shape()) {
    throw ShapeError("latent_shift: images differ in shape " + to_string(x.shape()) + " vs " +
                     to_string(x_pert.shape()));
  }
  return latent_shift(encode(encoder, x), encode(encoder, x_pert));
}

void Trajectory::append(const TrajectoryRecord& r) {
  if (!steps.empty() && r.iter <= steps.back().iter) {
    throw std::invalid_argument("trajectory iterations must be strictly increasing (" +
                                std::to_string(r.iter) + " after " + std::to_string(steps.back().iter) + ")");
  }
  steps.push_back(r);
}

std::string trajectory_csv(const Trajectory& traj) {
  std::string out = kTrajectoryCsvHeader;
  out += '\n';
  for (const TrajectoryRecord& r : traj.steps) {
    out += std::to_string(r.iter);
    for (double v : {r.loss, r.mu_shift, r.sigma_shift, r.logvar_gap, r.delta_linf}) {
      out += ',';
      out += fmt_g17(v);
    }
    out += '\n';
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void export_trajectory(const Trajectory& traj, const std::filesystem::path& csv_path) {
  write_text_file(csv_path, trajectory_csv(traj));
}

Trajectory parse_trajectory_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTrajectoryCsvHeader) {
    throw std::invalid_argument("trajectory CSV: missing or unexpected header");
  }
  Trajectory traj;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 6) {
      throw std::invalid_argument("trajectory CSV line " + std::to_string(lineno) + ": expected 6 fields");
    }
    TrajectoryRecord r;
    const double it = parse_double(fields[0], lineno);
    if (it < 0 || it != std::floor(it)) {
      throw std::invalid_argument("trajectory CSV line " + std::to_string(lineno) + ": bad iteration");
    }
    r.iter = static_cast<std::size_t>(it);
    r.loss = parse_double(fields[1], lineno);
    r.mu_shift = parse_double(fields[2], lineno);
    r.sigma_shift = parse_double(fields[3], lineno);
    r.logvar_gap = parse_double(fields[4], lineno);
    r.delta_linf = parse_double(fields[5], lineno);
    traj.append(r);
  }
  return traj;
}

Trajectory read_trajectory(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + csv_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trajectory_csv(ss.str());
}

std::string trajectory_svg(const Trajectory& traj, const std::string& title) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 150, kTop = 30, kBottom = 40;
  const double per = traj.latent_numel > 0 ? 1.0 / static_cast<double>(traj.latent_numel) : 1.0;
  struct Series {
    const char* name;
    const char* color;
    std::vector<std::pair<double, double>> pts;
  };
  Series series[5] = {{"loss", "#1f77b4", {}},
                      {"mu_shift", "#d62728", {}},
                      {"sigma_shift", "#2ca02c", {}},
                      {"|logvar_gap|", "#9467bd", {}},
                      {"delta_linf", "#7f7f7f", {}}};
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  for (const TrajectoryRecord& r : traj.steps) {
    const double vals[5] = {std::fabs(r.loss), r.mu_shift * per, r.sigma_shift * per, std::fabs(r.logvar_gap),
                            r.delta_linf};
    for (int k = 0; k < 5; ++k) {
      if (!(vals[k] > 0.0) || !std::isfinite(vals[k])) continue;
      const double ly = std::log10(vals[k]);
      series[k].pts.emplace_back(static_cast<double>(r.iter), ly);
      lo = std::min(lo, ly);
      hi = std::max(hi, ly);
    }
  }
  if (!(lo <= hi)) lo = 0, hi = 1;
  if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
  const double max_iter = traj.steps.empty() ? 1.0 : std::max<double>(1.0, traj.steps.back().iter);
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kLeft << "\" y=\"18\" font-size=\"13\">" << xml_escape(title) << "</text>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"4\" y=\"" << kTop + 10 << "\" font-size=\"10\">1e" << fmt_short(hi) << "</text>\n";
  os << "<text x=\"4\" y=\"" << kTop + ph << "\" font-size=\"10\">1e" << fmt_short(lo) << "</text>\n";
  os << "<text x=\"" << kLeft + pw - 30 << "\" y=\"" << kH - 10 << "\" font-size=\"10\">iter " << max_iter
     << "</text>\n";
  for (int k = 0; k < 5; ++k) {
    os << "<polyline fill=\"none\" stroke=\"" << series[k].color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[k].pts.size(); ++i) {
      const double px = kLeft + pw * series[k].pts[i].first / max_iter;
      const double py = kTop + ph * (1.0 - (series[k].pts[i].second - lo) / (hi - lo));
      os << (i ? " " : "") << fmt_short(px) << ',' << fmt_short(py);
    }
    os << "\"/>\n";
    os << "<text x=\"" << kW - kRight + 10 << "\" y=\"" << kTop + 15 + 18 * k << "\" font-size=\"11\" fill=\""
       << series[k].color << "\">" << series[k].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string shift_svg(const LatentDistribution& clean, const LatentDistribution& pert, const std::string& title) {
  require_same_shape(clean.mu, pert.mu, "shift_svg");
  require_same_shape(clean.logvar, pert.logvar, "shift_svg");
  const Shape& s = clean.mu.shape();
  if (s.size() != 3) throw ShapeError("shift_svg expects (L, h, w) latents, got " + to_string(s));
  const std::size_t channels = s[0], plane = s[1] * s[2];
  std::vector<double> mu(channels, 0.0), gap(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
      const double d = pert.mu[i] - clean.mu[i];
      mu[c] += d * d / static_cast<double>(plane);
      gap[c] += (pert.logvar[i] - clean.logvar[i]) / static_cast<double>(plane);
    }
  }
  double top = 0.0;
  for (std::size_t c = 0; c < channels; ++c) top = std::max({top, mu[c], std::fabs(gap[c])});
  if (!(top > 0.0)) top = 1.0;

  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 150, kTop = 30, kBottom = 40;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  // Zero line in the middle so negative gaps fit.
  const double zero_y = kTop + ph / 2.0, unit = ph / 2.0 / top;
  const double slot = pw / static_cast<double>(channels), bar = slot * 0.35;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kLeft << "\" y=\"18\" font-size=\"13\">" << xml_escape(title) << "</text>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << fmt_short(zero_y) << "\" x2=\"" << kLeft + pw << "\" y2=\""
     << fmt_short(zero_y) << "\" stroke=\"#999\"/>\n";
  os << "<text x=\"4\" y=\"" << kTop + 10 << "\" font-size=\"10\">" << fmt_short(top) << "</text>\n";
  os << "<text x=\"4\" y=\"" << kTop + ph << "\" font-size=\"10\">" << fmt_short(-top) << "</text>\n";
  auto rect = [&](double x, double v, const char* color) {
    const double y = v >= 0.0 ? zero_y - v * unit : zero_y;
    os << "<rect x=\"" << fmt_short(x) << "\" y=\"" << fmt_short(y) << "\" width=\"" << fmt_short(bar)
       << "\" height=\"" << fmt_short(std::fabs(v) * unit) << "\" fill=\"" << color << "\"/>\n";
  };
  for (std::size_t c = 0; c < channels; ++c) {
    const double x0 = kLeft + slot * static_cast<double>(c) + slot * 0.1;
    rect(x0, mu[c], "#d62728");
    rect(x0 + bar, gap[c], "#9467bd");
    os << "<text x=\"" << fmt_short(x0) << "\" y=\"" << kH - 10 << "\" font-size=\"10\">ch " << c << "</text>\n";
  }
  os << "<text x=\"" << kW - kRight + 10 << "\" y=\"" << kTop + 15 << "\" font-size=\"11\" fill=\"#d62728\">"
     << "mu_shift</text>\n";
  os << "<text x=\"" << kW - kRight + 10 << "\" y=\"" << kTop + 33 << "\" font-size=\"11\" fill=\"#9467bd\">"
     << "logvar_gap</text>\n";
  os << "</svg>\n";
  return os.str();
}

void export_trajectory_svg(const Trajectory& traj, const std::filesystem::path& svg_path,
                           const std::string& title) {
  write_text_file(svg_path, trajectory_svg(traj, title));
}

}  // namespace lshield
