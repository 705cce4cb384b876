#pragma once

#include <complex>
#include <optional>
#include <ostream>
#include <vector>

#include "lfm/dictionary.hpp"

namespace lfm {

/// Square real-valued patch, row-major.
struct RealPatch {
  int side = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y * side + x)]; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y * side + x)]; }
};

struct PeriodRange {
  double min = 0.0;
  double max = 0.0;
  bool contains(double p) const { return p >= min && p <= max; }
};

struct AtomIdConfig {
  double xcorr_threshold = 0.6;
  PeriodRange broad_period{3.0, 20.0};
  PeriodRange valid_period{5.3, 12.8};

  void validate() const;
};

/// Strongest bandpass DFT bin, on the canonical half-plane (v > 0, or v == 0 and u > 0).
struct SpectralPeak {
  int u = 0;  ///< signed frequency index along x
  int v = 0;  ///< signed frequency index along y
  double magnitude = 0.0;
  double phase = 0.0;
  double radius() const;
};

struct AtomAnalysis {
  int atom_index = 0;
  bool has_peak = false;
  double orientation = 0.0;  ///< across-ridge direction, radians in [0, pi)
  double period = 0.0;       ///< pixels
  double xcorr = 0.0;
  bool is_ridge_valley = false;
};

RealPatch atom_to_patch(const Dictionary& dict, int k);
std::vector<double> patch_to_vector(const RealPatch& p);

/// Full 2-D DFT, F(u, v) = sum f(x, y) exp(-2 pi i (u x + v y) / w), indexed [v][u] with u, v in [0, w).
std::vector<std::complex<double>> dft2(const RealPatch& p);

std::optional<SpectralPeak> dominant_frequency(const RealPatch& p, const PeriodRange& broad_period);

/// atan2(v, u) folded into [0, pi).
double atom_orientation(int peak_u, int peak_v);

/// Inverse DFT of a spectrum holding only the peak and its conjugate twin.
RealPatch reconstruct_pattern(const SpectralPeak& peak, int side);
/// Same synthesis kept complex, to expose the (vanishing) imaginary part.
std::vector<std::complex<double>> reconstruct_pattern_complex(const SpectralPeak& peak, int side);

/// Maximum normalized cross-correlation over offsets in [-w/2, w/2]^2. The atom
/// mean is taken over the overlap and the pattern mean over the whole pattern.
double xcorr_peak(const RealPatch& atom, const RealPatch& pattern);
double xcorr_at(const RealPatch& atom, const RealPatch& pattern, int dx, int dy);

/// Mean spacing of strict local maxima of the pattern sampled through the centre
/// along `orientation`; falls back to side / fallback_radius with fewer than two peaks.
double ridge_period(const RealPatch& pattern, double orientation, double fallback_radius);

AtomAnalysis analyze_atom(const RealPatch& atom, const AtomIdConfig& cfg, int index = 0);

/// OpenMP-parallel over atoms.
std::vector<AtomAnalysis> classify_atoms(const Dictionary& dict, const AtomIdConfig& cfg);
std::vector<AtomAnalysis> classify_atoms_serial(const Dictionary& dict, const AtomIdConfig& cfg);

std::vector<AtomLabel> labels_from(const std::vector<AtomAnalysis>& analyses);

/// Tab-separated, one line per atom: index, xcorr, period, orientation, label.
void write_atom_report(std::ostream& out, const std::vector<AtomAnalysis>& analyses);

}  // namespace lfm
