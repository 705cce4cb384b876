#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lfm/image.hpp"
#include "lfm/segmentation.hpp"

namespace lfm {

enum class MinutiaType { Ending, Bifurcation, Unknown };

char type_code(MinutiaType t);
MinutiaType type_from_code(char c);

/// Orientation in degrees, measured from +x toward +y, in [0, 360).
struct Minutia {
  double x = 0.0;
  double y = 0.0;
  double orientation = 0.0;
  MinutiaType type = MinutiaType::Unknown;

  friend bool operator==(const Minutia&, const Minutia&) = default;
};

struct MinutiaSet {
  std::string id;
  std::vector<Minutia> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  /// Throws InvalidArgument on out-of-range fields or duplicate quadruples.
  void validate() const;
  friend bool operator==(const MinutiaSet&, const MinutiaSet&) = default;
};

/// a - b folded into [0, 180].
double angle_difference(double a_deg, double b_deg);
double wrap_degrees(double deg);

/// One record per line: "x y orientation type", type in {E, B, U}; '#' lines are comments.
MinutiaSet read_minutiae(std::istream& in, std::string id = {});
void write_minutiae(std::ostream& out, const MinutiaSet& set);
MinutiaSet load_minutiae(const std::filesystem::path& path);
void save_minutiae(const MinutiaSet& set, const std::filesystem::path& path);

MinutiaSet mask_by_roi(const MinutiaSet& set, const RoiPolygon& roi);

struct ExtractorConfig {
  int normalize_window = 15;     ///< local mean/variance window (odd)
  double orientation_sigma = 6;  ///< smoothing of the gradient tensor
  int smoothing_half_length = 4; ///< oriented smoothing along the ridge
  double min_local_std = 6.0;    ///< below this the pixel is background
  int border_margin = 10;        ///< drop minutiae this close to the foreground edge
  double min_separation = 6.0;   ///< minutiae closer than this are discarded as pairs
  int trace_length = 10;         ///< skeleton steps used for the direction estimate
};

/// Intermediates of one extraction, exposed for inspection and tests.
struct ExtractionTrace {
  BinaryMask foreground;
  BinaryMask ridges;
  BinaryMask skeleton;
  MinutiaSet minutiae;
};

/// Baseline extractor: local normalization, oriented smoothing, adaptive
/// binarization, thinning, crossing-number detection. Deterministic.
ExtractionTrace extract_minutiae_detailed(const GrayImage& img, const std::optional<RoiPolygon>& roi,
                                          const ExtractorConfig& cfg = {});
MinutiaSet extract_minutiae(const GrayImage& img, const std::optional<RoiPolygon>& roi = std::nullopt,
                            const ExtractorConfig& cfg = {});

/// Zhang-Suen thinning.
BinaryMask thin(const BinaryMask& m);
/// Half the number of 0/1 transitions around the 8-neighborhood.
int crossing_number(const BinaryMask& skeleton, int x, int y);

}  // namespace lfm
