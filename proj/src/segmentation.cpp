#include "lfm/segmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "lfm/error.hpp"

namespace lfm {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void SegmentConfig::validate() const {
  if (patch_size < 2) throw ConfigError("patch size must be >= 2");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (morph.element_size < 1 || morph.element_size % 2 == 0)
    throw ConfigError("structuring element size must be a positive odd number");
  train.validate();
  atomid.validate();
}

namespace {

void check_vote_inputs(const GrayImage& img, const Dictionary& dict, const PatchGrid& grid, int sparsity) {
  if (!dict.fully_labeled()) throw PreconditionError("vote map requires a dictionary labeled by atom identification");
  if (grid.image_width != img.width() || grid.image_height != img.height())
    throw InvalidArgument("patch grid was built for a different image size");
  if (grid.patch_size * grid.patch_size != dict.atom_dim())
    throw InvalidArgument("patch size does not match dictionary atom dimension");
  if (sparsity < 1 || sparsity > dict.atom_count()) throw InvalidArgument("sparsity must be in [1, Na]");
}

bool patch_votes(const GrayImage& img, const Dictionary& dict, PixelPoint origin, int w, int sparsity,
                 std::vector<double>& scratch) {
  scratch.resize(static_cast<std::size_t>(w * w));
  for (int dy = 0; dy < w; ++dy)
    for (int dx = 0; dx < w; ++dx) scratch[static_cast<std::size_t>(dy * w + dx)] = img.at(origin.x + dx, origin.y + dy);
  normalize_in_place(scratch);
  const SparseCode code = omp_encode(dict, scratch, sparsity);
  const int winner = code.dominant_atom();
  return winner >= 0 && dict.is_ridge_valley(winner);
}

VoteMap accumulate(const GrayImage& img, const PatchGrid& grid, const std::vector<std::uint8_t>& votes) {
  VoteMap map{img.width(), img.height(), std::vector<std::uint32_t>(img.pixels().size(), 0)};
  const int w = grid.patch_size;
  for (std::size_t i = 0; i < grid.origins.size(); ++i) {
    if (!votes[i]) continue;
    const auto o = grid.origins[i];
    for (int dy = 0; dy < w; ++dy)
      for (int dx = 0; dx < w; ++dx) ++map.counts[static_cast<std::size_t>((o.y + dy) * map.width + o.x + dx)];
  }
  return map;
}

double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

}  // namespace

VoteMap build_vote_map_serial(const GrayImage& img, const Dictionary& dict, const PatchGrid& grid, int sparsity) {
  check_vote_inputs(img, dict, grid, sparsity);
  std::vector<std::uint8_t> votes(grid.origins.size(), 0);
  std::vector<double> scratch;
  for (std::size_t i = 0; i < grid.origins.size(); ++i)
    votes[i] = patch_votes(img, dict, grid.origins[i], grid.patch_size, sparsity, scratch) ? 1 : 0;
  return accumulate(img, grid, votes);
}

VoteMap build_vote_map(const GrayImage& img, const Dictionary& dict, const PatchGrid& grid, int sparsity) {
  check_vote_inputs(img, dict, grid, sparsity);
  const auto n = static_cast<std::ptrdiff_t>(grid.origins.size());
  std::vector<std::uint8_t> votes(grid.origins.size(), 0);
#pragma omp parallel
  {
    std::vector<double> scratch;
#pragma omp for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto u = static_cast<std::size_t>(i);
      votes[u] = patch_votes(img, dict, grid.origins[u], grid.patch_size, sparsity, scratch) ? 1 : 0;
    }
  }
  return accumulate(img, grid, votes);
}

std::vector<double> normalize_votes(const VoteMap& map) {
  std::vector<double> out(map.counts.size(), 0.0);
  if (map.counts.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(map.counts.begin(), map.counts.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    std::fill(out.begin(), out.end(), hi > 0 ? 1.0 : 0.0);
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (map.counts[i] - lo) / (hi - lo);
  return out;
}

VoteMap coverage_map(const PatchGrid& grid, int width, int height) {
  VoteMap map{width, height, std::vector<std::uint32_t>(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0)};
  const int w = grid.patch_size;
  for (const auto& o : grid.origins)
    for (int y = std::max(0, o.y); y < std::min(height, o.y + w); ++y)
      for (int x = std::max(0, o.x); x < std::min(width, o.x + w); ++x) ++map.counts[static_cast<std::size_t>(y * width + x)];
  return map;
}

std::vector<double> normalize_votes(const VoteMap& map, const VoteMap& coverage) {
  if (map.width != coverage.width || map.height != coverage.height)
    throw InvalidArgument("vote map and coverage map differ in size");
  std::vector<double> ratio(map.counts.size(), 0.0);
  for (std::size_t i = 0; i < ratio.size(); ++i)
    if (coverage.counts[i] > 0) ratio[i] = static_cast<double>(map.counts[i]) / coverage.counts[i];
  if (ratio.empty()) return ratio;
  const auto [lo_it, hi_it] = std::minmax_element(ratio.begin(), ratio.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    std::fill(ratio.begin(), ratio.end(), hi > 0 ? 1.0 : 0.0);
    return ratio;
  }
  for (double& v : ratio) v = (v - lo) / (hi - lo);
  return ratio;
}

double otsu_threshold(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("Otsu threshold needs at least one value");
  std::array<double, 256> hist{};
  for (double v : values) {
    const long b = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    hist[static_cast<std::size_t>(b)] += 1.0;
  }
  const auto occupied = std::count_if(hist.begin(), hist.end(), [](double h) { return h > 0; });
  if (occupied <= 1) return *std::min_element(values.begin(), values.end());

  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int b = 0; b < 256; ++b) sum_all += b * hist[static_cast<std::size_t>(b)];

  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_k = 1;
  for (int k = 1; k < 256; ++k) {
    w0 += hist[static_cast<std::size_t>(k - 1)];
    sum0 += (k - 1) * hist[static_cast<std::size_t>(k - 1)];
    const double w1 = total - w0;
    if (w0 <= 0 || w1 <= 0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = (w0 / total) * (w1 / total) * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_k = k;
    }
  }
  return (best_k - 0.5) / 255.0;
}

BinaryMask binarize(std::span<const double> values, int width, int height, double threshold) {
  if (values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw InvalidArgument("value count does not match mask size");
  BinaryMask m(width, height);
  for (std::size_t i = 0; i < values.size(); ++i) m.bits[i] = values[i] >= threshold ? 1 : 0;
  return m;
}

namespace {

// Separable square min/max filter. `outside` is the value assumed beyond the border.
BinaryMask square_filter(const BinaryMask& m, int size, bool is_dilate) {
  const int r = size / 2;
  const bool outside = !is_dilate;
  const int W = m.width, H = m.height;
  auto pass = [&](const BinaryMask& in, bool horizontal) {
    BinaryMask out(W, H);
    const int len = horizontal ? W : H;
    const int lines = horizontal ? H : W;
    for (int line = 0; line < lines; ++line) {
      auto get = [&](int i) -> int {
        if (i < 0 || i >= len) return outside ? 1 : 0;
        return horizontal ? in.at(i, line) : in.at(line, i);
      };
      int ones = 0;
      for (int i = -r; i <= r; ++i) ones += get(i);
      for (int i = 0; i < len; ++i) {
        const bool v = is_dilate ? ones > 0 : ones == 2 * r + 1;
        if (horizontal) out.set(i, line, v);
        else out.set(line, i, v);
        ones += get(i + r + 1) - get(i - r);
      }
    }
    return out;
  };
  return pass(pass(m, true), false);
}

}  // namespace

BinaryMask dilate(const BinaryMask& m, int element_size) { return square_filter(m, element_size, true); }
BinaryMask erode(const BinaryMask& m, int element_size) { return square_filter(m, element_size, false); }

BinaryMask fill_holes(const BinaryMask& m) {
  const int W = m.width, H = m.height;
  std::vector<std::uint8_t> reached(m.bits.size(), 0);
  std::deque<std::pair<int, int>> queue;
  auto seed = [&](int x, int y) {
    const auto i = static_cast<std::size_t>(y * W + x);
    if (!m.bits[i] && !reached[i]) {
      reached[i] = 1;
      queue.emplace_back(x, y);
    }
  };
  for (int x = 0; x < W; ++x) {
    seed(x, 0);
    seed(x, H - 1);
  }
  for (int y = 0; y < H; ++y) {
    seed(0, y);
    seed(W - 1, y);
  }
  constexpr int dx4[4] = {1, -1, 0, 0}, dy4[4] = {0, 0, 1, -1};
  while (!queue.empty()) {
    const auto [x, y] = queue.front();
    queue.pop_front();
    for (int d = 0; d < 4; ++d) {
      const int nx = x + dx4[d], ny = y + dy4[d];
      if (nx >= 0 && ny >= 0 && nx < W && ny < H) seed(nx, ny);
    }
  }
  BinaryMask out(W, H);
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = reached[i] ? 0 : 1;
  return out;
}

std::vector<int> label_components(const BinaryMask& m, int* count) {
  const int W = m.width, H = m.height;
  std::vector<int> labels(m.bits.size(), 0);
  int next = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const auto i = static_cast<std::size_t>(y * W + x);
      if (!m.bits[i] || labels[i]) continue;
      labels[i] = ++next;
      stack.emplace_back(x, y);
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
            const auto j = static_cast<std::size_t>(ny * W + nx);
            if (m.bits[j] && !labels[j]) {
              labels[j] = next;
              stack.emplace_back(nx, ny);
            }
          }
      }
    }
  if (count) *count = next;
  return labels;
}

BinaryMask remove_small_components(const BinaryMask& m, std::size_t min_area) {
  int n = 0;
  const auto labels = label_components(m, &n);
  std::vector<std::size_t> sizes(static_cast<std::size_t>(n) + 1, 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  BinaryMask out(m.width, m.height);
  for (std::size_t i = 0; i < labels.size(); ++i)
    out.bits[i] = labels[i] && sizes[static_cast<std::size_t>(labels[i])] >= min_area ? 1 : 0;
  return out;
}

BinaryMask morph_cleanup(const BinaryMask& mask, const MorphConfig& cfg) {
  const int k = cfg.element_size;
  BinaryMask m = erode(dilate(mask, k), k);  // closing
  m = dilate(erode(m, k), k);                // opening
  m = fill_holes(m);
  return remove_small_components(m, cfg.min_area);
}

std::vector<Point2> convex_hull(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

RoiPolygon roi_polygon(const BinaryMask& mask, HullMode mode) {
  int n = 0;
  const auto labels = label_components(mask, &n);
  if (n == 0) return {};
  int keep = 0;  // 0 = every component
  if (mode == HullMode::LargestComponent) {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(n) + 1, 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    keep = 1;
    for (int l = 2; l <= n; ++l)
      if (sizes[static_cast<std::size_t>(l)] > sizes[static_cast<std::size_t>(keep)]) keep = l;
  }
  // Row extremes suffice for the hull.
  std::vector<Point2> pts;
  for (int y = 0; y < mask.height; ++y) {
    int lo = -1, hi = -1;
    for (int x = 0; x < mask.width; ++x) {
      const int l = labels[static_cast<std::size_t>(y * mask.width + x)];
      if (l == 0 || (keep && l != keep)) continue;
      if (lo < 0) lo = x;
      hi = x;
    }
    if (lo >= 0) {
      pts.push_back({static_cast<double>(lo), static_cast<double>(y)});
      pts.push_back({static_cast<double>(hi), static_cast<double>(y)});
    }
  }
  RoiPolygon roi;
  roi.vertices = convex_hull(std::move(pts));
  if (roi.vertices.size() < 3) roi.vertices.clear();
  return roi;
}

double RoiPolygon::area() const {
  double a = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const auto& p = vertices[i];
    const auto& q = vertices[(i + 1) % vertices.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

bool RoiPolygon::contains(Point2 p) const {
  const std::size_t n = vertices.size();
  if (n == 0) return false;
  constexpr double eps = 1e-9;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = vertices[i], b = vertices[(i + 1) % n];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (std::abs(cross(a, b, p)) <= eps * std::max(1.0, len) && p.x >= std::min(a.x, b.x) - eps &&
        p.x <= std::max(a.x, b.x) + eps && p.y >= std::min(a.y, b.y) - eps && p.y <= std::max(a.y, b.y) + eps)
      return true;
  }
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2 a = vertices[i], b = vertices[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xi = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < xi) inside = !inside;
    }
  }
  return inside;
}

BinaryMask rasterize(const RoiPolygon& roi, int width, int height) {
  BinaryMask m(width, height);
  if (roi.empty()) return m;
  double y_lo = roi.vertices[0].y, y_hi = y_lo;
  for (const auto& v : roi.vertices) {
    y_lo = std::min(y_lo, v.y);
    y_hi = std::max(y_hi, v.y);
  }
  for (int y = std::max(0, static_cast<int>(std::floor(y_lo))); y < height && y <= y_hi + 1; ++y)
    for (int x = 0; x < width; ++x)
      if (roi.contains({static_cast<double>(x), static_cast<double>(y)})) m.set(x, y, true);
  return m;
}

SegmentationResult segment_detailed(const GrayImage& img, const SegmentConfig& cfg) {
  cfg.validate();
  SegmentationResult res;
  const PatchGrid grid = make_patch_grid(img, cfg.patch_size, cfg.stride);
  const auto [lo, hi] = std::minmax_element(img.pixels().begin(), img.pixels().end());
  if (*lo == *hi) {
    // A flat image carries no ridge texture; there is nothing to learn from.
    res.votes = VoteMap{img.width(), img.height(), std::vector<std::uint32_t>(img.pixels().size(), 0)};
    res.otsu_mask = BinaryMask(img.width(), img.height());
    res.cleaned_mask = res.otsu_mask;
    res.threshold = 1.0;
    return res;
  }
  const auto patches = extract_patches(img, grid);
  res.dictionary = learn_dictionary(patches, cfg.train);
  res.atoms = classify_atoms(res.dictionary, cfg.atomid);
  res.dictionary.set_labels(labels_from(res.atoms));
  res.votes = build_vote_map(img, res.dictionary, grid, cfg.train.sparsity);

  const bool any_vote = std::any_of(res.votes.counts.begin(), res.votes.counts.end(), [](auto c) { return c > 0; });
  if (!any_vote) {
    res.otsu_mask = BinaryMask(img.width(), img.height());
    res.cleaned_mask = res.otsu_mask;
    res.threshold = 1.0;
    return res;
  }
  const auto normalized = cfg.border_compensation
                               ? normalize_votes(res.votes, coverage_map(grid, img.width(), img.height()))
                               : normalize_votes(res.votes);
  res.threshold = otsu_threshold(normalized);
  res.otsu_mask = binarize(normalized, img.width(), img.height(), res.threshold);
  res.cleaned_mask = morph_cleanup(res.otsu_mask, cfg.morph);
  res.roi = roi_polygon(res.cleaned_mask, cfg.hull);
  return res;
}

RoiPolygon segment(const GrayImage& img, const SegmentConfig& cfg) { return segment_detailed(img, cfg).roi; }

void write_roi(std::ostream& out, const RoiPolygon& roi) {
  out << "ROI " << roi.vertices.size() << '\n';
  char buf[64];
  for (const auto& v : roi.vertices) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g\n", v.x, v.y);
    out << buf;
  }
}

void save_roi(const RoiPolygon& roi, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  write_roi(out, roi);
}

RoiPolygon read_roi(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      const auto p = line.find_first_not_of(" \t\r");
      if (p == std::string::npos || line[p] == '#') continue;
      return true;
    }
    return false;
  };
  if (!next_line()) throw ParseError("missing ROI header", lineno + 1);
  std::istringstream hs(line);
  std::string tag;
  long n = -1;
  if (!(hs >> tag >> n) || tag != "ROI" || n < 0) throw ParseError("expected 'ROI <n>'", lineno);
  RoiPolygon roi;
  for (long i = 0; i < n; ++i) {
    if (!next_line()) throw ParseError("expected " + std::to_string(n) + " vertices", lineno + 1);
    std::istringstream ls(line);
    Point2 p;
    std::string extra;
    if (!(ls >> p.x >> p.y) || (ls >> extra)) throw ParseError("expected 'x y'", lineno);
    roi.vertices.push_back(p);
  }
  if (!roi.vertices.empty() && roi.vertices.size() < 3) throw ParseError("ROI polygon needs at least 3 vertices", lineno);
  return roi;
}

RoiPolygon load_roi(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  return read_roi(in);
}

GrayImage vote_map_image(const VoteMap& map) {
  GrayImage img(map.width, map.height);
  const auto hi = map.counts.empty() ? 0u : *std::max_element(map.counts.begin(), map.counts.end());
  if (hi == 0) return img;
  for (std::size_t i = 0; i < map.counts.size(); ++i)
    img.pixels()[i] = static_cast<std::uint8_t>(std::lround(255.0 * map.counts[i] / hi));
  return img;
}

GrayImage mask_image(const BinaryMask& mask) {
  GrayImage img(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) img.pixels()[i] = mask.bits[i] ? 255 : 0;
  return img;
}

}  // namespace lfm
