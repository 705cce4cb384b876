#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "lfm/atomid.hpp"
#include "lfm/dictionary.hpp"
#include "lfm/image.hpp"

namespace lfm {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Per-pixel count of ridge-valley votes.
struct VoteMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> counts;

  std::uint32_t at(int x, int y) const { return counts[static_cast<std::size_t>(y * width + x)]; }
};

struct BinaryMask {
  BinaryMask() = default;
  BinaryMask(int w, int h, bool fill = false)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill ? 1 : 0) {}

  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y * width + x)] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y * width + x)] = v ? 1 : 0; }
  std::size_t count() const;
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Convex polygon, counter-clockwise in (x, y) coordinates; empty or >= 3 vertices.
struct RoiPolygon {
  std::vector<Point2> vertices;

  bool empty() const noexcept { return vertices.empty(); }
  double area() const;
  /// Inclusive: points on an edge or vertex are inside.
  bool contains(Point2 p) const;
  friend bool operator==(const RoiPolygon&, const RoiPolygon&) = default;
};

struct MorphConfig {
  int element_size = 5;
  std::size_t min_area = 2048;
};

enum class HullMode { LargestComponent, AllComponents };

struct SegmentConfig {
  int patch_size = 32;
  int stride = 8;
  TrainConfig train;
  AtomIdConfig atomid;
  MorphConfig morph;
  HullMode hull = HullMode::LargestComponent;
  /// Divide each count by the number of patches covering the pixel before normalizing.
  bool border_compensation = true;

  void validate() const;
};

/// Winning-atom vote per patch, accumulated over each patch block. OpenMP-parallel over patches.
VoteMap build_vote_map(const GrayImage& img, const Dictionary& dict, const PatchGrid& grid, int sparsity);
/// Serial reference for build_vote_map.
VoteMap build_vote_map_serial(const GrayImage& img, const Dictionary& dict, const PatchGrid& grid, int sparsity);

/// Min-max normalization to [0, 1]. A constant map becomes all 1 when positive, all 0 otherwise.
std::vector<double> normalize_votes(const VoteMap& map);
/// Number of grid patches covering each pixel.
VoteMap coverage_map(const PatchGrid& grid, int width, int height);
/// counts / coverage per pixel, then min-max to [0,1]. Uncovered pixels get 0.
std::vector<double> normalize_votes(const VoteMap& map, const VoteMap& coverage);

/// Otsu over 256 levels; the returned threshold sits between histogram bins
/// and values >= threshold are foreground.
double otsu_threshold(std::span<const double> values);
BinaryMask binarize(std::span<const double> values, int width, int height, double threshold);

BinaryMask dilate(const BinaryMask& m, int element_size);
BinaryMask erode(const BinaryMask& m, int element_size);
BinaryMask fill_holes(const BinaryMask& m);
BinaryMask remove_small_components(const BinaryMask& m, std::size_t min_area);
/// Closing, opening, hole filling, then removal of 8-connected components below min_area.
BinaryMask morph_cleanup(const BinaryMask& mask, const MorphConfig& cfg);

/// 8-connected component labels (0 = background, 1.. in scan order of first pixel).
std::vector<int> label_components(const BinaryMask& m, int* count = nullptr);

/// Andrew's monotone chain; collinear points dropped, CCW output.
std::vector<Point2> convex_hull(std::vector<Point2> points);

RoiPolygon roi_polygon(const BinaryMask& mask, HullMode mode = HullMode::LargestComponent);
BinaryMask rasterize(const RoiPolygon& roi, int width, int height);

/// Intermediates of one segmentation run, for diagnostics and dumps.
struct SegmentationResult {
  Dictionary dictionary;
  std::vector<AtomAnalysis> atoms;
  VoteMap votes;
  BinaryMask otsu_mask;
  BinaryMask cleaned_mask;
  double threshold = 0.0;
  RoiPolygon roi;
};

SegmentationResult segment_detailed(const GrayImage& img, const SegmentConfig& cfg);
RoiPolygon segment(const GrayImage& img, const SegmentConfig& cfg);

/// "ROI <n>" followed by n lines "x y".
void write_roi(std::ostream& out, const RoiPolygon& roi);
void save_roi(const RoiPolygon& roi, const std::filesystem::path& path);
RoiPolygon read_roi(std::istream& in);
RoiPolygon load_roi(const std::filesystem::path& path);

GrayImage vote_map_image(const VoteMap& map);
GrayImage mask_image(const BinaryMask& mask);

}  // namespace lfm
