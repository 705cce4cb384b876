#include "lfm/minutiae.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "lfm/error.hpp"

namespace lfm {

char type_code(MinutiaType t) {
  switch (t) {
    case MinutiaType::Ending: return 'E';
    case MinutiaType::Bifurcation: return 'B';
    default: return 'U';
  }
}

MinutiaType type_from_code(char c) {
  switch (c) {
    case 'E': return MinutiaType::Ending;
    case 'B': return MinutiaType::Bifurcation;
    case 'U': return MinutiaType::Unknown;
    default: throw InvalidArgument(std::string("unknown minutia type '") + c + "'");
  }
}

double wrap_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0) r += 360.0;
  if (r >= 360.0) r -= 360.0;
  return r;
}

double angle_difference(double a_deg, double b_deg) {
  const double d = std::abs(wrap_degrees(a_deg) - wrap_degrees(b_deg));
  return std::min(d, 360.0 - d);
}

namespace {

using Key = std::tuple<double, double, double, int>;

Key key_of(const Minutia& m) { return {m.x, m.y, m.orientation, static_cast<int>(m.type)}; }

std::string check_minutia(const Minutia& m) {
  if (!std::isfinite(m.x) || !std::isfinite(m.y) || m.x < 0 || m.y < 0) return "coordinates must be finite and >= 0";
  if (!std::isfinite(m.orientation) || m.orientation < 0 || m.orientation >= 360.0)
    return "orientation must be in [0, 360)";
  return {};
}

bool parse_double(const std::string& tok, double& out) {
  const char* b = tok.data();
  const char* e = b + tok.size();
  const auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

std::string format_double(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

void MinutiaSet::validate() const {
  std::set<Key> seen;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (auto msg = check_minutia(points[i]); !msg.empty())
      throw InvalidArgument("minutia " + std::to_string(i) + ": " + msg);
    if (!seen.insert(key_of(points[i])).second) throw InvalidArgument("minutia " + std::to_string(i) + " is a duplicate");
  }
}

MinutiaSet read_minutiae(std::istream& in, std::string id) {
  MinutiaSet set;
  set.id = std::move(id);
  std::set<Key> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    if (line[start] == '#') {
      std::istringstream cs(line.substr(start + 1));
      std::string tag, value;
      if (cs >> tag >> value && tag == "id") set.id = value;
      continue;
    }
    std::istringstream ls(line);
    std::string tx, ty, to, tt, extra;
    if (!(ls >> tx >> ty >> to >> tt) || (ls >> extra))
      throw ParseError("expected 'x y orientation type'", lineno);
    Minutia m;
    if (!parse_double(tx, m.x) || !parse_double(ty, m.y) || !parse_double(to, m.orientation))
      throw ParseError("malformed number", lineno);
    if (tt.size() != 1 || std::string("EBU").find(tt[0]) == std::string::npos)
      throw ParseError("type must be one of E, B, U", lineno);
    m.type = type_from_code(tt[0]);
    if (auto msg = check_minutia(m); !msg.empty()) throw ParseError(msg, lineno);
    if (!seen.insert(key_of(m)).second) throw ParseError("duplicate minutia", lineno);
    set.points.push_back(m);
  }
  return set;
}

void write_minutiae(std::ostream& out, const MinutiaSet& set) {
  if (!set.id.empty() && set.id.find_first_of(" \t\n") == std::string::npos) out << "#id " << set.id << '\n';
  for (const auto& m : set.points)
    out << format_double(m.x) << ' ' << format_double(m.y) << ' ' << format_double(m.orientation) << ' '
        << type_code(m.type) << '\n';
}

MinutiaSet load_minutiae(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  return read_minutiae(in, path.stem().string());
}

void save_minutiae(const MinutiaSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  write_minutiae(out, set);
  if (!out) throw InputError("write failed for " + path.string());
}

MinutiaSet mask_by_roi(const MinutiaSet& set, const RoiPolygon& roi) {
  MinutiaSet out;
  out.id = set.id;
  for (const auto& m : set.points)
    if (roi.contains({m.x, m.y})) out.points.push_back(m);
  return out;
}

// ---------------------------------------------------------------------------
// Baseline extractor
// ---------------------------------------------------------------------------

namespace {

constexpr double kPi = std::numbers::pi;

struct Field {
  int w = 0, h = 0;
  std::vector<double> v;
  Field(int w_, int h_, double fill = 0.0) : w(w_), h(h_), v(static_cast<std::size_t>(w_) * h_, fill) {}
  double& at(int x, int y) { return v[static_cast<std::size_t>(y * w + x)]; }
  double at(int x, int y) const { return v[static_cast<std::size_t>(y * w + x)]; }
  double clamped(int x, int y) const { return at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); }
  double bilinear(double x, double y) const {
    x = std::clamp(x, 0.0, w - 1.0);
    y = std::clamp(y, 0.0, h - 1.0);
    const int x0 = std::min(static_cast<int>(x), w - 1), y0 = std::min(static_cast<int>(y), h - 1);
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0, fy = y - y0;
    return (at(x0, y0) * (1 - fx) + at(x1, y0) * fx) * (1 - fy) + (at(x0, y1) * (1 - fx) + at(x1, y1) * fx) * fy;
  }
};

Field box_mean(const Field& f, int radius) {
  // Integral image with border clamping of the window.
  const int W = f.w, H = f.h;
  std::vector<double> integral(static_cast<std::size_t>(W + 1) * (H + 1), 0.0);
  auto I = [&](int x, int y) -> double& { return integral[static_cast<std::size_t>(y * (W + 1) + x)]; };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) I(x + 1, y + 1) = f.at(x, y) + I(x, y + 1) + I(x + 1, y) - I(x, y);
  Field out(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int x0 = std::max(0, x - radius), x1 = std::min(W, x + radius + 1);
      const int y0 = std::max(0, y - radius), y1 = std::min(H, y + radius + 1);
      const double s = I(x1, y1) - I(x0, y1) - I(x1, y0) + I(x0, y0);
      out.at(x, y) = s / ((x1 - x0) * (y1 - y0));
    }
  return out;
}

Field gaussian_blur(const Field& f, double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& x : k) x /= sum;
  Field tmp(f.w, f.h), out(f.w, f.h);
  for (int y = 0; y < f.h; ++y)
    for (int x = 0; x < f.w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * f.clamped(x + i, y);
      tmp.at(x, y) = acc;
    }
  for (int y = 0; y < f.h; ++y)
    for (int x = 0; x < f.w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * tmp.clamped(x, y + i);
      out.at(x, y) = acc;
    }
  return out;
}

constexpr int kRingX[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kRingY[8] = {0, 1, 1, 1, 0, -1, -1, -1};

bool skel(const BinaryMask& s, int x, int y) {
  return x >= 0 && y >= 0 && x < s.width && y < s.height && s.at(x, y);
}

// Walks along the skeleton from `start` (a neighbour of `origin`) and returns the
// last pixel reached after at most `steps` moves.
PixelPoint trace(const BinaryMask& s, PixelPoint origin, PixelPoint start, int steps) {
  // The whole ring around the origin is blocked so a walk cannot slip into a sibling branch.
  std::set<std::pair<int, int>> visited{{origin.x, origin.y}, {start.x, start.y}};
  for (int d = 0; d < 8; ++d) visited.insert({origin.x + kRingX[d], origin.y + kRingY[d]});
  PixelPoint cur = start;
  for (int i = 1; i < steps; ++i) {
    std::optional<PixelPoint> next;
    for (int pass = 0; pass < 2 && !next; ++pass)
      for (int d = 0; d < 8; ++d) {
        const bool diagonal = d % 2 == 1;
        if (diagonal != (pass == 1)) continue;
        const int nx = cur.x + kRingX[d], ny = cur.y + kRingY[d];
        if (skel(s, nx, ny) && !visited.count({nx, ny})) {
          next = PixelPoint{nx, ny};
          break;
        }
      }
    if (!next) break;
    visited.insert({next->x, next->y});
    cur = *next;
  }
  return cur;
}

// First pixel of every run of set pixels around the 8-ring.
std::vector<PixelPoint> branch_starts(const BinaryMask& s, int x, int y) {
  std::vector<PixelPoint> out;
  for (int d = 0; d < 8; ++d) {
    const int prev = (d + 7) % 8;
    if (skel(s, x + kRingX[d], y + kRingY[d]) && !skel(s, x + kRingX[prev], y + kRingY[prev]))
      out.push_back({x + kRingX[d], y + kRingY[d]});
  }
  return out;
}

double direction_deg(PixelPoint from, PixelPoint to) {
  return wrap_degrees(std::atan2(to.y - from.y, to.x - from.x) * 180.0 / kPi);
}

// Removes branches that run from an end point into a junction within `max_len` pixels.
BinaryMask prune_spurs(BinaryMask s, int max_len) {
  std::vector<PixelPoint> ends;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      if (s.at(x, y) && crossing_number(s, x, y) == 1) ends.push_back({x, y});
  for (const auto e : ends) {
    std::vector<PixelPoint> path{e};
    std::set<std::pair<int, int>> visited{{e.x, e.y}};
    PixelPoint cur = e;
    bool hit_junction = false;
    for (int i = 0; i < max_len; ++i) {
      std::vector<PixelPoint> nbs;
      for (int d = 0; d < 8; ++d) {
        const int nx = cur.x + kRingX[d], ny = cur.y + kRingY[d];
        if (skel(s, nx, ny) && !visited.count({nx, ny})) nbs.push_back({nx, ny});
      }
      if (nbs.empty()) break;
      const PixelPoint n = nbs.front();
      if (crossing_number(s, n.x, n.y) >= 3) {
        hit_junction = true;
        break;
      }
      visited.insert({n.x, n.y});
      path.push_back(n);
      cur = n;
    }
    if (hit_junction)
      for (const auto p : path) s.set(p.x, p.y, false);
  }
  return s;
}

}  // namespace

int crossing_number(const BinaryMask& s, int x, int y) {
  int transitions = 0;
  for (int d = 0; d < 8; ++d) {
    const int a = skel(s, x + kRingX[d], y + kRingY[d]);
    const int b = skel(s, x + kRingX[(d + 1) % 8], y + kRingY[(d + 1) % 8]);
    transitions += std::abs(a - b);
  }
  return transitions / 2;
}

BinaryMask thin(const BinaryMask& input) {
  BinaryMask m = input;
  const int W = m.width, H = m.height;
  auto px = [&](int x, int y) -> int { return skel(m, x, y) ? 1 : 0; };
  bool changed = true;
  std::vector<std::size_t> to_clear;
  while (changed) {
    changed = false;
    for (int step = 0; step < 2; ++step) {
      to_clear.clear();
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          if (!m.at(x, y)) continue;
          const int p2 = px(x, y - 1), p3 = px(x + 1, y - 1), p4 = px(x + 1, y), p5 = px(x + 1, y + 1);
          const int p6 = px(x, y + 1), p7 = px(x - 1, y + 1), p8 = px(x - 1, y), p9 = px(x - 1, y - 1);
          const int b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
          if (b < 2 || b > 6) continue;
          const int seq[9] = {p2, p3, p4, p5, p6, p7, p8, p9, p2};
          int a = 0;
          for (int i = 0; i < 8; ++i) a += (seq[i] == 0 && seq[i + 1] == 1);
          if (a != 1) continue;
          if (step == 0 ? (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0) : (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0))
            continue;
          to_clear.push_back(static_cast<std::size_t>(y * W + x));
        }
      for (auto i : to_clear) m.bits[i] = 0;
      changed = changed || !to_clear.empty();
    }
  }
  // Drop staircase corners so every interior skeleton pixel has crossing number 2.
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!m.at(x, y)) continue;
      const int n = px(x, y - 1), e = px(x + 1, y), s = px(x, y + 1), w = px(x - 1, y);
      const bool corner = (n && e && !px(x - 1, y + 1)) || (e && s && !px(x - 1, y - 1)) ||
                          (s && w && !px(x + 1, y - 1)) || (w && n && !px(x + 1, y + 1));
      if (!corner) continue;
      m.set(x, y, false);
      // Keep the pixel if removing it would split the local neighbourhood.
      if (crossing_number(m, x, y) != 1) m.set(x, y, true);
    }
  return m;
}

ExtractionTrace extract_minutiae_detailed(const GrayImage& img, const std::optional<RoiPolygon>& roi,
                                          const ExtractorConfig& cfg) {
  const int W = img.width(), H = img.height();
  ExtractionTrace out;
  out.minutiae.id = {};

  Field f(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) f.at(x, y) = img.at(x, y);

  const int r = cfg.normalize_window / 2;
  const Field mean = box_mean(f, r);
  Field sq(W, H);
  for (std::size_t i = 0; i < f.v.size(); ++i) sq.v[i] = f.v[i] * f.v[i];
  const Field mean_sq = box_mean(sq, r);

  out.foreground = BinaryMask(W, H);
  Field norm(W, H);
  for (std::size_t i = 0; i < f.v.size(); ++i) {
    const double sd = std::sqrt(std::max(0.0, mean_sq.v[i] - mean.v[i] * mean.v[i]));
    if (sd >= cfg.min_local_std) {
      out.foreground.bits[i] = 1;
      norm.v[i] = std::clamp((f.v[i] - mean.v[i]) / sd, -3.0, 3.0);
    }
  }
  if (roi) {
    const BinaryMask roi_mask = rasterize(*roi, W, H);
    for (std::size_t i = 0; i < out.foreground.bits.size(); ++i) out.foreground.bits[i] &= roi_mask.bits[i];
  }
  out.foreground = fill_holes(dilate(erode(out.foreground, 5), 5));
  out.ridges = BinaryMask(W, H);
  out.skeleton = BinaryMask(W, H);
  if (out.foreground.count() == 0) return out;

  // Ridge orientation from the doubled-angle gradient tensor.
  Field gxx(W, H), gxy(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double gx = (norm.clamped(x + 1, y - 1) + 2 * norm.clamped(x + 1, y) + norm.clamped(x + 1, y + 1)) -
                        (norm.clamped(x - 1, y - 1) + 2 * norm.clamped(x - 1, y) + norm.clamped(x - 1, y + 1));
      const double gy = (norm.clamped(x - 1, y + 1) + 2 * norm.clamped(x, y + 1) + norm.clamped(x + 1, y + 1)) -
                        (norm.clamped(x - 1, y - 1) + 2 * norm.clamped(x, y - 1) + norm.clamped(x + 1, y - 1));
      gxx.at(x, y) = gx * gx - gy * gy;
      gxy.at(x, y) = 2 * gx * gy;
    }
  const Field sxx = gaussian_blur(gxx, cfg.orientation_sigma);
  const Field sxy = gaussian_blur(gxy, cfg.orientation_sigma);

  // Smooth along the ridge, then threshold at the local mean (dark ridges).
  const int L = cfg.smoothing_half_length;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!out.foreground.at(x, y)) continue;
      const double ridge_dir = 0.5 * std::atan2(sxy.at(x, y), sxx.at(x, y)) + kPi / 2;
      const double ux = std::cos(ridge_dir), uy = std::sin(ridge_dir);
      double acc = 0;
      for (int t = -L; t <= L; ++t) acc += norm.bilinear(x + t * ux, y + t * uy);
      out.ridges.set(x, y, acc < 0.0);
    }

  out.skeleton = prune_spurs(thin(out.ridges), 10);

  const int margin = cfg.border_margin;
  const BinaryMask interior = margin > 0 ? erode(out.foreground, 2 * margin + 1) : out.foreground;
  std::vector<Minutia> found;
  for (int y = 1; y + 1 < H; ++y)
    for (int x = 1; x + 1 < W; ++x) {
      if (!out.skeleton.at(x, y) || !interior.at(x, y)) continue;
      if (x < margin || y < margin || x >= W - margin || y >= H - margin) continue;
      const int cn = crossing_number(out.skeleton, x, y);
      if (cn != 1 && cn != 3) continue;
      const PixelPoint here{x, y};
      const auto starts = branch_starts(out.skeleton, x, y);
      Minutia m{static_cast<double>(x), static_cast<double>(y), 0.0,
                cn == 1 ? MinutiaType::Ending : MinutiaType::Bifurcation};
      if (cn == 1 ? starts.empty() : starts.size() != 3) continue;
      // The smoothed orientation field gives the angle; the skeleton branches give
      // the sense: along the ridge body for an ending, toward the two forks for a
      // bifurcation (two of its three branches lie on the fork side).
      const double flow = wrap_degrees((0.5 * std::atan2(sxy.at(x, y), sxx.at(x, y)) + kPi / 2) * 180.0 / kPi);
      int forward = 0;
      for (const auto& st : starts) {
        const double a = direction_deg(here, trace(out.skeleton, here, st, cfg.trace_length));
        forward += angle_difference(a, flow) <= 90.0 ? 1 : -1;
      }
      m.orientation = forward > 0 ? flow : wrap_degrees(flow + 180.0);
      found.push_back(m);
    }

  // Pairs closer than min_separation are usually broken ridges or spurs.
  std::vector<char> drop(found.size(), 0);
  for (std::size_t i = 0; i < found.size(); ++i)
    for (std::size_t j = i + 1; j < found.size(); ++j)
      if (std::hypot(found[i].x - found[j].x, found[i].y - found[j].y) < cfg.min_separation) drop[i] = drop[j] = 1;
  for (std::size_t i = 0; i < found.size(); ++i)
    if (!drop[i]) out.minutiae.points.push_back(found[i]);
  if (roi) out.minutiae = mask_by_roi(out.minutiae, *roi);
  return out;
}

MinutiaSet extract_minutiae(const GrayImage& img, const std::optional<RoiPolygon>& roi, const ExtractorConfig& cfg) {
  return extract_minutiae_detailed(img, roi, cfg).minutiae;
}

}  // namespace lfm
