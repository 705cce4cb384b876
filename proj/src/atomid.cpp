#include "lfm/atomid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "lfm/error.hpp"

namespace lfm {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMagnitudeFloor = 1e-9;

int signed_index(int k, int w) { return k <= (w - 1) / 2 ? k : k - w; }

bool canonical_half_plane(int u, int v) { return v > 0 || (v == 0 && u > 0); }

double sample_bilinear(const RealPatch& p, double x, double y) {
  const double maxc = p.side - 1;
  x = std::clamp(x, 0.0, maxc);
  y = std::clamp(y, 0.0, maxc);
  const int x0 = std::min(static_cast<int>(std::floor(x)), p.side - 1);
  const int y0 = std::min(static_cast<int>(std::floor(y)), p.side - 1);
  const int x1 = std::min(x0 + 1, p.side - 1);
  const int y1 = std::min(y0 + 1, p.side - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = p.at(x0, y0) * (1 - fx) + p.at(x1, y0) * fx;
  const double bot = p.at(x0, y1) * (1 - fx) + p.at(x1, y1) * fx;
  return top * (1 - fy) + bot * fy;
}

}  // namespace

void AtomIdConfig::validate() const {
  if (!(xcorr_threshold > 0.0 && xcorr_threshold < 1.0)) throw ConfigError("xcorr threshold must be in (0, 1)");
  if (!(broad_period.min > 0.0 && broad_period.min < broad_period.max))
    throw ConfigError("broad period range must satisfy 0 < min < max");
  if (!(valid_period.min > 0.0 && valid_period.min < valid_period.max))
    throw ConfigError("valid period range must satisfy 0 < min < max");
  if (valid_period.min < broad_period.min || valid_period.max > broad_period.max)
    throw ConfigError("valid period range must lie inside the broad range");
}

double SpectralPeak::radius() const { return std::hypot(static_cast<double>(u), static_cast<double>(v)); }

RealPatch atom_to_patch(const Dictionary& dict, int k) {
  if (k < 0 || k >= dict.atom_count()) throw InvalidArgument("atom index out of range");
  const int ns = dict.atom_dim();
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(ns))));
  if (side * side != ns) throw InvalidArgument("atom dimension " + std::to_string(ns) + " is not a perfect square");
  RealPatch p;
  p.side = side;
  const auto col = dict.atoms().col(k);
  p.values.assign(col.data(), col.data() + ns);
  return p;
}

std::vector<double> patch_to_vector(const RealPatch& p) { return p.values; }

std::vector<std::complex<double>> dft2(const RealPatch& p) {
  const int w = p.side;
  std::vector<std::complex<double>> twiddle(static_cast<std::size_t>(w));
  for (int k = 0; k < w; ++k) twiddle[static_cast<std::size_t>(k)] = std::polar(1.0, -2.0 * kPi * k / w);
  auto tw = [&](int k) { return twiddle[static_cast<std::size_t>(((k % w) + w) % w)]; };

  // Rows: G[y][u] = sum_x f(x, y) e^{-2 pi i u x / w}
  std::vector<std::complex<double>> rows(static_cast<std::size_t>(w * w));
  for (int y = 0; y < w; ++y)
    for (int u = 0; u < w; ++u) {
      std::complex<double> acc = 0.0;
      for (int x = 0; x < w; ++x) acc += p.at(x, y) * tw(u * x);
      rows[static_cast<std::size_t>(y * w + u)] = acc;
    }
  // Columns: F[v][u] = sum_y G[y][u] e^{-2 pi i v y / w}
  std::vector<std::complex<double>> out(static_cast<std::size_t>(w * w));
  for (int v = 0; v < w; ++v)
    for (int u = 0; u < w; ++u) {
      std::complex<double> acc = 0.0;
      for (int y = 0; y < w; ++y) acc += rows[static_cast<std::size_t>(y * w + u)] * tw(v * y);
      out[static_cast<std::size_t>(v * w + u)] = acc;
    }
  return out;
}

std::optional<SpectralPeak> dominant_frequency(const RealPatch& p, const PeriodRange& broad_period) {
  const int w = p.side;
  if (w < 2 || p.values.size() != static_cast<std::size_t>(w * w)) throw InvalidArgument("patch must be square");
  const auto F = dft2(p);
  const double r_min = w / broad_period.max;
  const double r_max = w / broad_period.min;

  std::optional<SpectralPeak> best;
  double best_r = 0.0;
  double best_angle = 0.0;
  for (int vi = 0; vi < w; ++vi)
    for (int ui = 0; ui < w; ++ui) {
      const int u = signed_index(ui, w);
      const int v = signed_index(vi, w);
      if (!canonical_half_plane(u, v)) continue;
      const double r = std::hypot(static_cast<double>(u), static_cast<double>(v));
      if (r < r_min || r > r_max) continue;
      const std::complex<double> c = F[static_cast<std::size_t>(vi * w + ui)];
      const double mag = std::abs(c);
      if (mag < kMagnitudeFloor) continue;
      const double angle = std::atan2(static_cast<double>(v), static_cast<double>(u));
      bool take = !best.has_value();
      if (!take) {
        const double tol = 1e-12 * std::max(mag, best->magnitude);
        if (mag > best->magnitude + tol) {
          take = true;
        } else if (std::abs(mag - best->magnitude) <= tol) {
          take = r < best_r - 1e-12 || (std::abs(r - best_r) <= 1e-12 && angle < best_angle);
        }
      }
      if (take) {
        best = SpectralPeak{u, v, mag, std::arg(c)};
        best_r = r;
        best_angle = angle;
      }
    }
  return best;
}

double atom_orientation(int peak_u, int peak_v) {
  if (peak_u == 0 && peak_v == 0) throw InvalidArgument("orientation of the zero-frequency bin is undefined");
  double a = std::atan2(static_cast<double>(peak_v), static_cast<double>(peak_u));
  if (a < 0) a += kPi;
  if (a >= kPi) a -= kPi;
  return a;
}

std::vector<std::complex<double>> reconstruct_pattern_complex(const SpectralPeak& peak, int side) {
  const int w = side;
  const std::complex<double> c = std::polar(peak.magnitude, peak.phase);
  const std::complex<double> twin = std::conj(c);
  std::vector<std::complex<double>> out(static_cast<std::size_t>(w * w));
  const double norm = 1.0 / (static_cast<double>(w) * w);
  for (int y = 0; y < w; ++y)
    for (int x = 0; x < w; ++x) {
      const double arg = 2.0 * kPi * (peak.u * x + peak.v * y) / w;
      const std::complex<double> e = std::polar(1.0, arg);
      out[static_cast<std::size_t>(y * w + x)] = norm * (c * e + twin * std::conj(e));
    }
  return out;
}

RealPatch reconstruct_pattern(const SpectralPeak& peak, int side) {
  const auto z = reconstruct_pattern_complex(peak, side);
  RealPatch p;
  p.side = side;
  p.values.resize(z.size());
  std::transform(z.begin(), z.end(), p.values.begin(), [](const std::complex<double>& c) { return c.real(); });
  return p;
}

double xcorr_at(const RealPatch& atom, const RealPatch& pattern, int dx, int dy) {
  const int w = atom.side;
  double pattern_mean = 0.0;
  for (double v : pattern.values) pattern_mean += v;
  pattern_mean /= static_cast<double>(pattern.values.size());

  const int x0 = std::max(0, dx), x1 = std::min(w, w + dx);
  const int y0 = std::max(0, dy), y1 = std::min(w, w + dy);
  if (x0 >= x1 || y0 >= y1) return 0.0;
  double sp = 0.0, spp = 0.0, sb = 0.0, sbb = 0.0, spb = 0.0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const double pv = atom.at(x, y);
      const double bv = pattern.at(x - dx, y - dy) - pattern_mean;
      sp += pv;
      spp += pv * pv;
      sb += bv;
      sbb += bv * bv;
      spb += pv * bv;
    }
  const double n = static_cast<double>((x1 - x0) * (y1 - y0));
  const double atom_mean = sp / n;
  const double saa = spp - n * atom_mean * atom_mean;
  const double sab = spb - atom_mean * sb;
  if (saa <= 1e-12 * spp || sbb <= 0.0 || spp == 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double xcorr_peak(const RealPatch& atom, const RealPatch& pattern) {
  if (atom.side != pattern.side || atom.values.size() != pattern.values.size())
    throw InvalidArgument("xcorr operands must have equal dimensions");
  const int half = atom.side / 2;
  double best = -1.0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) best = std::max(best, xcorr_at(atom, pattern, dx, dy));
  return best;
}

double ridge_period(const RealPatch& pattern, double orientation, double fallback_radius) {
  const int w = pattern.side;
  const double c = (w - 1) / 2.0;
  const double ux = std::cos(orientation), uy = std::sin(orientation);
  std::vector<double> wave(static_cast<std::size_t>(w));
  for (int i = 0; i < w; ++i) {
    const double t = i - c;
    wave[static_cast<std::size_t>(i)] = sample_bilinear(pattern, c + t * ux, c + t * uy);
  }
  std::vector<double> peaks;
  for (std::size_t i = 1; i + 1 < wave.size(); ++i) {
    const double a = wave[i - 1], b = wave[i], d = wave[i + 1];
    if (b > a && b > d) {
      // Parabolic vertex through the three samples; stays within (-0.5, 0.5).
      const double denom = a - 2.0 * b + d;
      const double shift = denom != 0.0 ? 0.5 * (a - d) / denom : 0.0;
      peaks.push_back(static_cast<double>(i) + shift);
    }
  }
  if (peaks.size() < 2) {
    if (!(fallback_radius > 0.0)) return 0.0;
    return w / fallback_radius;
  }
  return (peaks.back() - peaks.front()) / static_cast<double>(peaks.size() - 1);
}

AtomAnalysis analyze_atom(const RealPatch& atom, const AtomIdConfig& cfg, int index) {
  AtomAnalysis a;
  a.atom_index = index;
  const auto peak = dominant_frequency(atom, cfg.broad_period);
  if (!peak) return a;
  a.has_peak = true;
  a.orientation = atom_orientation(peak->u, peak->v);
  const RealPatch pattern = reconstruct_pattern(*peak, atom.side);
  a.xcorr = xcorr_peak(atom, pattern);
  a.period = ridge_period(pattern, a.orientation, peak->radius());
  a.is_ridge_valley = a.xcorr >= cfg.xcorr_threshold && cfg.valid_period.contains(a.period);
  return a;
}

std::vector<AtomAnalysis> classify_atoms_serial(const Dictionary& dict, const AtomIdConfig& cfg) {
  cfg.validate();
  std::vector<AtomAnalysis> out;
  out.reserve(static_cast<std::size_t>(dict.atom_count()));
  for (int k = 0; k < dict.atom_count(); ++k) out.push_back(analyze_atom(atom_to_patch(dict, k), cfg, k));
  return out;
}

std::vector<AtomAnalysis> classify_atoms(const Dictionary& dict, const AtomIdConfig& cfg) {
  cfg.validate();
  const int na = dict.atom_count();
  if (na > 0) (void)atom_to_patch(dict, 0);  // surfaces the non-square error outside the parallel region
  std::vector<AtomAnalysis> out(static_cast<std::size_t>(na));
#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < na; ++k) out[static_cast<std::size_t>(k)] = analyze_atom(atom_to_patch(dict, k), cfg, k);
  return out;
}

std::vector<AtomLabel> labels_from(const std::vector<AtomAnalysis>& analyses) {
  std::vector<AtomLabel> labels;
  labels.reserve(analyses.size());
  for (const auto& a : analyses) labels.push_back(a.is_ridge_valley ? AtomLabel::RidgeValley : AtomLabel::NonRidgeValley);
  return labels;
}

void write_atom_report(std::ostream& out, const std::vector<AtomAnalysis>& analyses) {
  char line[160];
  for (const auto& a : analyses) {
    std::snprintf(line, sizeof line, "%d\t%.6f\t%.4f\t%.6f\t%d\n", a.atom_index, a.xcorr, a.period, a.orientation,
                  a.is_ridge_valley ? 1 : 0);
    out << line;
  }
}

}  // namespace lfm
