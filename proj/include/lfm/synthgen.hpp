#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lfm/gamatch.hpp"
#include "lfm/identify.hpp"
#include "lfm/image.hpp"
#include "lfm/minutiae.hpp"
#include "lfm/segmentation.hpp"

namespace lfm {

enum class RegionKind { Full, LeftHalf, RightHalf, None, Polygon };

struct PlantedMinutia {
  double x = 0.0;
  double y = 0.0;
  MinutiaType type = MinutiaType::Ending;
  int charge = 1;  ///< +1 or -1; flips the side that carries the extra ridge
};

struct NoiseSpec {
  int lines = 0;         ///< straight strokes, 1-3 px wide
  int glyphs = 0;        ///< rectangles with internal strokes
  double speckle = 0.0;  ///< fraction of pixels set to salt or pepper
  double sigma = 0.0;    ///< additive Gaussian noise everywhere
  double blur = 0.0;     ///< Gaussian blur applied last
  bool overlap = false;  ///< allow structured noise over the ridge region
};

struct SynthSpec {
  int width = 256;
  int height = 256;
  RegionKind region = RegionKind::Full;
  std::vector<Point2> polygon;  ///< used with RegionKind::Polygon
  double period = 8.0;
  double orientation = 0.0;  ///< wave direction in degrees at the image centre
  double orientation_gradient_x = 0.0;  ///< degrees per pixel
  double orientation_gradient_y = 0.0;
  double amplitude = 80.0;
  double background = 128.0;
  std::vector<PlantedMinutia> minutiae;
  NoiseSpec noise;
  std::uint64_t seed = 1;

  /// Throws ConfigError.
  void validate() const;
  RoiPolygon region_polygon() const;
};

struct SynthResult {
  GrayImage image;
  BinaryMask region;       ///< ground-truth ridge support
  BinaryMask noise;        ///< pixels covered by structured noise strokes
  MinutiaSet minutiae;     ///< planted minutiae with their ground-truth orientation
  std::string spec_echo;
};

/// Wave direction in degrees at (x, y).
double wave_direction(const SynthSpec& spec, double x, double y);

SynthResult generate(const SynthSpec& spec);

/// "key = value" lines; '#' starts a comment. Unknown keys are errors.
SynthSpec read_synth_spec(std::istream& in);
SynthSpec load_synth_spec(const std::filesystem::path& path);
void write_synth_spec(std::ostream& out, const SynthSpec& spec);

/// Writes <stem>.pgm, <stem>_mask.pgm, <stem>.min and <stem>_spec.txt into `dir`.
void save_synth(const SynthResult& r, const std::filesystem::path& dir, const std::string& stem);

/// Uniform minutiae in [margin, width - margin] x [margin, height - margin], random orientation, E or B.
MinutiaSet random_minutiae(int count, double width, double height, double margin, std::uint64_t seed);

struct PlantedPair {
  MinutiaSet c;
  MinutiaSet l;
  AffineParams truth;
  std::vector<IndexPair> surviving;  ///< (index in C, index in L) of the planted correspondences
};

/// L = T0(base) with Gaussian position jitter, round(dropout * |base|) points removed and
/// `clutter` random points added inside the transformed bounding box; L is shuffled.
PlantedPair plant_transformed_pair(const MinutiaSet& base, const AffineParams& t0, double jitter, double dropout,
                                   int clutter, std::uint64_t seed);

/// Random transform within `ranges` that keeps every transformed point inside [0, width] x [0, height].
AffineParams random_transform_within(const MinutiaSet& base, const ParamRanges& ranges, double width, double height,
                                     std::uint64_t seed);

struct SynthGallery {
  Gallery gallery;
  std::vector<LatentQuery> latents;
};

struct SynthGalleryConfig {
  int gallery_size = 50;
  int latents = 5;
  int points = 30;
  double frame = 500.0;
  double jitter = 3.0;
  double dropout = 0.2;
  int clutter = 5;
  std::uint64_t seed = 1;
};

/// Random gallery prints "g000"...; latent "q<k>" is a planted transform of print k.
SynthGallery make_synth_gallery(const SynthGalleryConfig& cfg);

}  // namespace lfm
