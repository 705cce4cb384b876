#include "lfm/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "lfm/error.hpp"

#ifdef LFM_HAVE_PNG
#include <png.h>
#endif

namespace lfm {

GrayImage::GrayImage(int width, int height, std::uint8_t fill) {
  if (width < 1 || height < 1) throw InvalidArgument("image dimensions must be >= 1");
  width_ = width;
  height_ = height;
  pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> pixels) {
  if (width < 1 || height < 1) throw InvalidArgument("image dimensions must be >= 1");
  if (pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw InvalidArgument("pixel count does not match width x height");
  width_ = width;
  height_ = height;
  pixels_ = std::move(pixels);
}

PatchGrid make_patch_grid(int width, int height, int patch_size, int stride) {
  if (patch_size < 1) throw InvalidArgument("patch size must be >= 1");
  if (stride < 1) throw InvalidArgument("stride must be >= 1");
  if (patch_size > width || patch_size > height)
    throw InvalidArgument("patch size " + std::to_string(patch_size) + " exceeds image dimension");
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.stride = stride;
  grid.image_width = width;
  grid.image_height = height;
  for (int y = 0; y + patch_size <= height; y += stride)
    for (int x = 0; x + patch_size <= width; x += stride) grid.origins.push_back({x, y});
  return grid;
}

std::vector<PatchVector> extract_patches(const GrayImage& img, const PatchGrid& grid) {
  if (grid.image_width != img.width() || grid.image_height != img.height())
    throw InvalidArgument("patch grid was built for a different image size");
  const int w = grid.patch_size;
  std::vector<PatchVector> out;
  out.reserve(grid.origins.size());
  for (const auto& o : grid.origins) {
    PatchVector p;
    p.origin = o;
    p.values.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(w));
    for (int dy = 0; dy < w; ++dy)
      for (int dx = 0; dx < w; ++dx)
        p.values[static_cast<std::size_t>(dy * w + dx)] = img.at(o.x + dx, o.y + dy);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PatchVector> extract_patches(const GrayImage& img, int patch_size, int stride) {
  return extract_patches(img, make_patch_grid(img, patch_size, stride));
}

void normalize_in_place(std::span<double> values) {
  if (values.empty()) return;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double& v : values) {
    v -= mean;
    ss += v * v;
  }
  const double norm = std::sqrt(ss);
  // Relative to the input scale so that rounding noise left by the mean
  // subtraction of a constant patch never survives as a direction.
  if (norm <= 1e-12 * (std::abs(mean) + 1.0)) {
    std::fill(values.begin(), values.end(), 0.0);
    return;
  }
  for (double& v : values) v /= norm;
}

PatchVector normalize_patch(const PatchVector& p) {
  PatchVector out = p;
  normalize_in_place(out.values);
  return out;
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<char>& data) : data_(data) {}

  // Next whitespace-delimited token, skipping '#' comments.
  std::string token() {
    skip_space_and_comments();
    std::string t;
    while (pos_ < data_.size() && !std::isspace(static_cast<unsigned char>(data_[pos_])) && data_[pos_] != '#')
      t.push_back(data_[pos_++]);
    if (t.empty()) throw FormatError("PGM: unexpected end of header");
    return t;
  }

  long number() {
    const std::string t = token();
    for (char c : t)
      if (!std::isdigit(static_cast<unsigned char>(c))) throw FormatError("PGM: expected number, got '" + t + "'");
    if (t.size() > 9) throw FormatError("PGM: number too large");
    return std::stol(t);
  }

  // P5: exactly one whitespace byte separates maxval from the raster.
  void single_whitespace() {
    if (pos_ >= data_.size() || !std::isspace(static_cast<unsigned char>(data_[pos_])))
      throw FormatError("PGM: missing whitespace after maxval");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < data_.size()) {
      const char c = data_[pos_];
      if (c == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<char>& data_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

GrayImage decode_pgm(const std::vector<char>& data) {
  HeaderReader rd(data);
  const std::string magic = rd.token();
  if (magic != "P5" && magic != "P2") throw FormatError("PGM: bad magic '" + magic + "'");
  const long width = rd.number();
  const long height = rd.number();
  const long maxval = rd.number();
  if (width < 1 || height < 1) throw FormatError("PGM: non-positive dimensions");
  if (maxval < 1) throw FormatError("PGM: maxval must be positive");
  if (maxval > 255) throw UnsupportedDepthError("PGM: maxval " + std::to_string(maxval) + " > 255 is not supported");
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<std::uint8_t> px(count);
  if (magic == "P5") {
    rd.single_whitespace();
    const std::size_t start = rd.pos();
    if (data.size() < start + count) throw FormatError("PGM: truncated raster");
    for (std::size_t i = 0; i < count; ++i) {
      const auto v = static_cast<std::uint8_t>(data[start + i]);
      if (v > maxval) throw FormatError("PGM: sample exceeds maxval");
      px[i] = v;
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const long v = rd.number();
      if (v > maxval) throw FormatError("PGM: sample exceeds maxval");
      px[i] = static_cast<std::uint8_t>(v);
    }
  }
  return GrayImage(static_cast<int>(width), static_cast<int>(height), std::move(px));
}

#ifdef LFM_HAVE_PNG
GrayImage decode_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw FormatError("PNG: " + std::string(image.message));
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, px.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError("PNG: " + std::string(image.message));
  }
  return GrayImage(static_cast<int>(image.width), static_cast<int>(image.height), std::move(px));
}
#endif

}  // namespace

GrayImage load_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

void save_pgm(const GrayImage& img, const std::filesystem::path& path, bool ascii) {
  if (img.empty()) throw InvalidArgument("cannot save an empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  if (ascii) {
    out << "P2\n" << img.width() << ' ' << img.height() << "\n255\n";
    const auto px = img.pixels();
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        if (x) out << ' ';
        out << static_cast<int>(px[static_cast<std::size_t>(y * img.width() + x)]);
      }
      out << '\n';
    }
  } else {
    out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels().data()), static_cast<std::streamsize>(img.pixels().size()));
  }
  if (!out) throw InputError("write failed for " + path.string());
}

bool png_supported() noexcept {
#ifdef LFM_HAVE_PNG
  return true;
#else
  return false;
#endif
}

GrayImage load_image(const std::filesystem::path& path) {
  const std::vector<char> data = read_file(path);
  static constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  const bool is_png =
      data.size() >= 8 && std::equal(std::begin(kPngSig), std::end(kPngSig), data.begin(),
                                     [](unsigned char a, char b) { return a == static_cast<unsigned char>(b); });
  if (is_png) {
#ifdef LFM_HAVE_PNG
    return decode_png(path);
#else
    throw FormatError("PNG input requires a build with libpng");
#endif
  }
  return decode_pgm(data);
}

}  // namespace lfm
