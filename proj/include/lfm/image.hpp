#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lfm {

/// Row-major 8-bit grayscale raster.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 0);
  GrayImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }

  std::uint8_t at(int x, int y) const { return pixels_[index(x, y)]; }
  std::uint8_t& at(int x, int y) { return pixels_[index(x, y)]; }

  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  std::span<std::uint8_t> pixels() noexcept { return pixels_; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

struct PixelPoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

/// Top-left origins of all fully contained w x w blocks, row-major.
struct PatchGrid {
  int patch_size = 0;
  int stride = 0;
  int image_width = 0;
  int image_height = 0;
  std::vector<PixelPoint> origins;
};

/// One vectorized w x w block (row-major raster of the block).
struct PatchVector {
  std::vector<double> values;
  PixelPoint origin;
};

PatchGrid make_patch_grid(int width, int height, int patch_size, int stride);
inline PatchGrid make_patch_grid(const GrayImage& img, int patch_size, int stride) {
  return make_patch_grid(img.width(), img.height(), patch_size, stride);
}

std::vector<PatchVector> extract_patches(const GrayImage& img, const PatchGrid& grid);
std::vector<PatchVector> extract_patches(const GrayImage& img, int patch_size, int stride);

/// Zero-mean, unit l2 norm; constant input maps to the zero vector.
PatchVector normalize_patch(const PatchVector& p);
void normalize_in_place(std::span<double> values);

GrayImage load_pgm(const std::filesystem::path& path);
void save_pgm(const GrayImage& img, const std::filesystem::path& path, bool ascii = false);

/// Dispatches on file signature: PGM (P2/P5) always, PNG when built with libpng.
GrayImage load_image(const std::filesystem::path& path);
bool png_supported() noexcept;

}  // namespace lfm
