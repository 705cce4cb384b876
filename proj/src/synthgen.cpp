#include "lfm/synthgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "lfm/error.hpp"
#include "lfm/rng.hpp"

namespace lfm {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

std::string num(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

const char* region_name(RegionKind k) {
  switch (k) {
    case RegionKind::Full: return "full";
    case RegionKind::LeftHalf: return "left-half";
    case RegionKind::RightHalf: return "right-half";
    case RegionKind::None: return "none";
    default: return "polygon";
  }
}

}  // namespace

RoiPolygon SynthSpec::region_polygon() const {
  const double W = width, H = height;
  switch (region) {
    case RegionKind::Full: return {{{0, 0}, {W, 0}, {W, H}, {0, H}}};
    case RegionKind::LeftHalf: return {{{0, 0}, {W / 2, 0}, {W / 2, H}, {0, H}}};
    case RegionKind::RightHalf: return {{{W / 2, 0}, {W, 0}, {W, H}, {W / 2, H}}};
    case RegionKind::None: return {};
    default: return {convex_hull(polygon)};
  }
}

void SynthSpec::validate() const {
  if (width < 16 || height < 16 || width > 8192 || height > 8192) throw ConfigError("image size must be in [16, 8192]");
  if (region == RegionKind::Polygon && convex_hull(polygon).size() < 3)
    throw ConfigError("region polygon needs at least 3 non-collinear vertices");
  if (region != RegionKind::None && !(period >= 5.3 && period <= 12.8))
    throw ConfigError("ridge period must be in [5.3, 12.8]");
  if (!(amplitude > 0) || amplitude > 127) throw ConfigError("amplitude must be in (0, 127]");
  if (!(background >= 0 && background <= 255)) throw ConfigError("background must be in [0, 255]");
  if (noise.lines < 0 || noise.glyphs < 0) throw ConfigError("noise counts must be >= 0");
  if (!(noise.speckle >= 0 && noise.speckle <= 1)) throw ConfigError("speckle must be in [0, 1]");
  if (!(noise.sigma >= 0) || !(noise.blur >= 0 && noise.blur <= 10)) throw ConfigError("noise sigma/blur out of range");
  const RoiPolygon roi = region_polygon();
  for (const auto& m : minutiae) {
    if (m.charge != 1 && m.charge != -1) throw ConfigError("minutia charge must be +1 or -1");
    if (m.type == MinutiaType::Unknown) throw ConfigError("planted minutiae must be E or B");
    if (roi.empty() || !roi.contains({m.x, m.y})) throw ConfigError("planted minutia outside the ridge region");
  }
}

double wave_direction(const SynthSpec& s, double x, double y) {
  return s.orientation + s.orientation_gradient_x * (x - s.width / 2.0) + s.orientation_gradient_y * (y - s.height / 2.0);
}

namespace {

struct Canvas {
  int w, h;
  std::vector<double> v;
  double& at(int x, int y) { return v[static_cast<std::size_t>(y * w + x)]; }
};

double base_phase(const SynthSpec& s, double x, double y) {
  const double phi = wave_direction(s, x, y) * kDeg;
  const double k = 2 * kPi / s.period;
  return k * ((x - s.width / 2.0) * std::cos(phi) + (y - s.height / 2.0) * std::sin(phi));
}

struct Singularity {
  double x, y;
  int charge;
  double offset;
};

double singular_phase(const std::vector<Singularity>& sing, double sigma, double x, double y, int skip = -1) {
  double p = 0;
  for (int i = 0; i < static_cast<int>(sing.size()); ++i) {
    if (i == skip) continue;
    const auto& s = sing[static_cast<std::size_t>(i)];
    const double dx = x - s.x, dy = y - s.y;
    p += s.charge * std::atan2(dy, dx) + s.offset * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
  }
  return p;
}

void stamp_disc(Canvas& c, BinaryMask& noise, const BinaryMask& region, bool overlap, double cx, double cy, double r,
                double value) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r))), x1 = std::min(c.w - 1, static_cast<int>(std::ceil(cx + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r))), y1 = std::min(c.h - 1, static_cast<int>(std::ceil(cy + r)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > r * r) continue;
      if (!overlap && region.at(x, y)) continue;
      c.at(x, y) = value;
      noise.set(x, y, true);
    }
}

void stroke(Canvas& c, BinaryMask& noise, const BinaryMask& region, bool overlap, double x0, double y0, double x1,
            double y1, double width, double value) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2)));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    stamp_disc(c, noise, region, overlap, x0 + t * (x1 - x0), y0 + t * (y1 - y0), width / 2.0, value);
  }
}

void blur(Canvas& c, double sigma) {
  if (sigma <= 0) return;
  const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& x : k) x /= sum;
  std::vector<double> tmp(c.v.size());
  for (int y = 0; y < c.h; ++y)
    for (int x = 0; x < c.w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * c.at(std::clamp(x + i, 0, c.w - 1), y);
      tmp[static_cast<std::size_t>(y * c.w + x)] = acc;
    }
  for (int y = 0; y < c.h; ++y)
    for (int x = 0; x < c.w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i)
        acc += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, c.h - 1) * c.w + x)];
      c.at(x, y) = acc;
    }
}

}  // namespace

SynthResult generate(const SynthSpec& spec) {
  spec.validate();
  const int W = spec.width, H = spec.height;
  SynthResult out;
  const RoiPolygon roi = spec.region_polygon();
  out.region = BinaryMask(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) out.region.set(x, y, !roi.empty() && roi.contains({x + 0.5, y + 0.5}));
  out.noise = BinaryMask(W, H);

  // Each singularity gets a local phase offset so that the dark lobe at its core
  // points toward the extra ridge (ending) or away from it (bifurcation).
  const double sigma = spec.period;
  std::vector<Singularity> sing;
  for (const auto& m : spec.minutiae) sing.push_back({m.x, m.y, m.charge, 0.0});
  std::vector<double> extra(sing.size());
  for (std::size_t i = 0; i < sing.size(); ++i)
    extra[i] = wave_direction(spec, sing[i].x, sing[i].y) * kDeg - sing[i].charge * kPi / 2;
  for (int sweep = 0; sweep < 4; ++sweep)
    for (std::size_t i = 0; i < sing.size(); ++i) {
      const double lobe = extra[i] + (spec.minutiae[i].type == MinutiaType::Bifurcation ? kPi : 0.0);
      const double p = base_phase(spec, sing[i].x, sing[i].y) +
                       singular_phase(sing, sigma, sing[i].x, sing[i].y, static_cast<int>(i));
      sing[i].offset = std::remainder(-sing[i].charge * lobe - p, 2 * kPi);
    }

  Canvas c{W, H, std::vector<double>(static_cast<std::size_t>(W) * H, spec.background)};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!out.region.at(x, y)) continue;
      const double phase = base_phase(spec, x, y) + singular_phase(sing, sigma, x, y);
      c.at(x, y) = spec.background - spec.amplitude * std::cos(phase);
    }

  {
    Rng rng(mix_seed(spec.seed, 1));
    for (int i = 0; i < spec.noise.lines; ++i) {
      const double x0 = rng.uniform(0, W), y0 = rng.uniform(0, H);
      const double ang = rng.uniform(0, kPi), len = rng.uniform(0.3, 0.9) * std::max(W, H);
      const double width = 1.0 + static_cast<double>(rng.below(3));
      const double value = spec.background - spec.amplitude * rng.uniform(0.7, 1.0);
      stroke(c, out.noise, out.region, spec.noise.overlap, x0, y0, x0 + len * std::cos(ang), y0 + len * std::sin(ang),
             width, value);
    }
  }
  {
    Rng rng(mix_seed(spec.seed, 2));
    for (int i = 0; i < spec.noise.glyphs; ++i) {
      const double gw = rng.uniform(14, 40), gh = rng.uniform(14, 40);
      const double x0 = rng.uniform(0, W - gw), y0 = rng.uniform(0, H - gh);
      const double value = spec.background - spec.amplitude * rng.uniform(0.7, 1.0);
      const double pen = 1.0 + static_cast<double>(rng.below(2));
      const bool ov = spec.noise.overlap;
      stroke(c, out.noise, out.region, ov, x0, y0, x0 + gw, y0, pen, value);
      stroke(c, out.noise, out.region, ov, x0 + gw, y0, x0 + gw, y0 + gh, pen, value);
      stroke(c, out.noise, out.region, ov, x0 + gw, y0 + gh, x0, y0 + gh, pen, value);
      stroke(c, out.noise, out.region, ov, x0, y0 + gh, x0, y0, pen, value);
      const int inner = 2 + static_cast<int>(rng.below(3));
      for (int s = 0; s < inner; ++s) {
        if (rng.uniform() < 0.5) {
          const double yy = y0 + rng.uniform(0.2, 0.8) * gh;
          stroke(c, out.noise, out.region, ov, x0 + 0.15 * gw, yy, x0 + rng.uniform(0.5, 0.85) * gw, yy, pen, value);
        } else {
          const double xx = x0 + rng.uniform(0.2, 0.8) * gw;
          stroke(c, out.noise, out.region, ov, xx, y0 + 0.15 * gh, xx, y0 + rng.uniform(0.5, 0.85) * gh, pen, value);
        }
      }
    }
  }
  if (spec.noise.speckle > 0) {
    Rng rng(mix_seed(spec.seed, 3));
    for (double& v : c.v)
      if (rng.uniform() < spec.noise.speckle) v = rng.uniform() < 0.5 ? 0.0 : 255.0;
  }
  if (spec.noise.sigma > 0) {
    Rng rng(mix_seed(spec.seed, 4));
    for (double& v : c.v) v += rng.normal(0.0, spec.noise.sigma);
  }
  blur(c, spec.noise.blur);

  std::vector<std::uint8_t> px(c.v.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(c.v[i], 0.0, 255.0)));
  out.image = GrayImage(W, H, std::move(px));

  for (std::size_t i = 0; i < spec.minutiae.size(); ++i) {
    const auto& m = spec.minutiae[i];
    out.minutiae.points.push_back({m.x, m.y, wrap_degrees(extra[i] / kDeg), m.type});
  }
  std::ostringstream echo;
  write_synth_spec(echo, spec);
  out.spec_echo = echo.str();
  return out;
}

SynthSpec read_synth_spec(std::istream& in) {
  SynthSpec s;
  std::string line;
  std::size_t lineno = 0;
  auto need = [&](std::istringstream& ls, auto& v) {
    if (!(ls >> v)) throw ParseError("missing or malformed value", lineno);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (char& ch : line)
      if (ch == '=') ch = ' ';
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "width") need(ls, s.width);
    else if (key == "height") need(ls, s.height);
    else if (key == "period") need(ls, s.period);
    else if (key == "orientation") need(ls, s.orientation);
    else if (key == "orientation_gradient") {
      need(ls, s.orientation_gradient_x);
      need(ls, s.orientation_gradient_y);
    } else if (key == "amplitude") need(ls, s.amplitude);
    else if (key == "background") need(ls, s.background);
    else if (key == "lines") need(ls, s.noise.lines);
    else if (key == "glyphs") need(ls, s.noise.glyphs);
    else if (key == "speckle") need(ls, s.noise.speckle);
    else if (key == "noise_sigma") need(ls, s.noise.sigma);
    else if (key == "blur") need(ls, s.noise.blur);
    else if (key == "seed") need(ls, s.seed);
    else if (key == "noise_overlap") {
      std::string v;
      need(ls, v);
      if (v != "true" && v != "false") throw ParseError("noise_overlap must be true or false", lineno);
      s.noise.overlap = v == "true";
    } else if (key == "region") {
      std::string v;
      need(ls, v);
      if (v == "full") s.region = RegionKind::Full;
      else if (v == "left-half") s.region = RegionKind::LeftHalf;
      else if (v == "right-half") s.region = RegionKind::RightHalf;
      else if (v == "none") s.region = RegionKind::None;
      else if (v == "polygon") {
        s.region = RegionKind::Polygon;
        double x, y;
        while (ls >> x >> y) s.polygon.push_back({x, y});
      } else {
        throw ParseError("unknown region '" + v + "'", lineno);
      }
    } else if (key == "minutia") {
      PlantedMinutia m;
      std::string type;
      need(ls, m.x);
      need(ls, m.y);
      need(ls, type);
      if (type != "E" && type != "B") throw ParseError("minutia type must be E or B", lineno);
      m.type = type_from_code(type[0]);
      if (int charge; ls >> charge) m.charge = charge;
      s.minutiae.push_back(m);
    } else {
      throw ParseError("unknown key '" + key + "'", lineno);
    }
    std::string extra;
    if (key != "region" && ls >> extra) throw ParseError("trailing text after '" + key + "'", lineno);
  }
  return s;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  return read_synth_spec(in);
}

void write_synth_spec(std::ostream& out, const SynthSpec& s) {
  out << "width = " << s.width << '\n' << "height = " << s.height << '\n' << "region = " << region_name(s.region);
  if (s.region == RegionKind::Polygon)
    for (const auto& p : s.polygon) out << ' ' << num(p.x) << ' ' << num(p.y);
  out << '\n'
      << "period = " << num(s.period) << '\n'
      << "orientation = " << num(s.orientation) << '\n'
      << "orientation_gradient = " << num(s.orientation_gradient_x) << ' ' << num(s.orientation_gradient_y) << '\n'
      << "amplitude = " << num(s.amplitude) << '\n'
      << "background = " << num(s.background) << '\n';
  for (const auto& m : s.minutiae)
    out << "minutia = " << num(m.x) << ' ' << num(m.y) << ' ' << type_code(m.type) << ' ' << m.charge << '\n';
  out << "lines = " << s.noise.lines << '\n'
      << "glyphs = " << s.noise.glyphs << '\n'
      << "speckle = " << num(s.noise.speckle) << '\n'
      << "noise_sigma = " << num(s.noise.sigma) << '\n'
      << "blur = " << num(s.noise.blur) << '\n'
      << "noise_overlap = " << (s.noise.overlap ? "true" : "false") << '\n'
      << "seed = " << s.seed << '\n';
}

void save_synth(const SynthResult& r, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  save_pgm(r.image, dir / (stem + ".pgm"));
  save_pgm(mask_image(r.region), dir / (stem + "_mask.pgm"));
  MinutiaSet m = r.minutiae;
  m.id = stem;
  save_minutiae(m, dir / (stem + ".min"));
  std::ofstream spec(dir / (stem + "_spec.txt"));
  if (!spec) throw InputError("cannot write spec echo in " + dir.string());
  spec << r.spec_echo;
}

MinutiaSet random_minutiae(int count, double width, double height, double margin, std::uint64_t seed) {
  if (count < 0 || width <= 2 * margin || height <= 2 * margin) throw InvalidArgument("random_minutiae: bad box");
  Rng rng(seed);
  MinutiaSet s;
  for (int i = 0; i < count; ++i)
    s.points.push_back({rng.uniform(margin, width - margin), rng.uniform(margin, height - margin), rng.uniform(0, 360),
                        rng.uniform() < 0.5 ? MinutiaType::Ending : MinutiaType::Bifurcation});
  return s;
}

PlantedPair plant_transformed_pair(const MinutiaSet& base, const AffineParams& t0, double jitter, double dropout,
                                   int clutter, std::uint64_t seed) {
  if (!(dropout >= 0 && dropout <= 1) || jitter < 0 || clutter < 0) throw InvalidArgument("plant: bad noise parameters");
  Rng rng(seed);
  const std::size_t n = base.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  const auto drop = static_cast<std::size_t>(std::lround(dropout * static_cast<double>(n)));
  std::vector<char> keep(n, 1);
  for (std::size_t k = 0; k < drop; ++k) keep[order[k]] = 0;

  struct Tagged {
    Minutia m;
    int source;
  };
  std::vector<Tagged> l;
  double minx = 1e300, miny = 1e300, maxx = -1e300, maxy = -1e300;
  for (std::size_t i = 0; i < n; ++i) {
    Minutia m = apply_transform(t0, base.points[i]);
    minx = std::min(minx, m.x), maxx = std::max(maxx, m.x);
    miny = std::min(miny, m.y), maxy = std::max(maxy, m.y);
    m.x += rng.normal(0.0, jitter);
    m.y += rng.normal(0.0, jitter);
    if (keep[i]) l.push_back({m, static_cast<int>(i)});
  }
  if (n == 0) minx = miny = 0, maxx = maxy = 100;
  for (int k = 0; k < clutter; ++k)
    l.push_back({{rng.uniform(minx - 20, maxx + 20), rng.uniform(miny - 20, maxy + 20), rng.uniform(0, 360),
                  rng.uniform() < 0.5 ? MinutiaType::Ending : MinutiaType::Bifurcation},
                 -1});
  rng.shuffle(l);

  PlantedPair p;
  p.c = base;
  p.truth = t0;
  p.l.id = base.id.empty() ? std::string() : base.id + "_latent";
  for (std::size_t j = 0; j < l.size(); ++j) {
    p.l.points.push_back(l[j].m);
    if (l[j].source >= 0) p.surviving.emplace_back(l[j].source, static_cast<int>(j));
  }
  std::sort(p.surviving.begin(), p.surviving.end());
  return p;
}

AffineParams random_transform_within(const MinutiaSet& base, const ParamRanges& ranges, double width, double height,
                                     std::uint64_t seed) {
  Rng rng(seed);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    AffineParams t{rng.uniform(ranges.theta.lo, ranges.theta.hi), rng.uniform(ranges.scale.lo, ranges.scale.hi), 0, 0};
    double minx = 1e300, miny = 1e300, maxx = -1e300, maxy = -1e300;
    for (const auto& m : base.points) {
      const Minutia q = apply_transform(t, m);
      minx = std::min(minx, q.x), maxx = std::max(maxx, q.x);
      miny = std::min(miny, q.y), maxy = std::max(maxy, q.y);
    }
    const double lox = std::max(ranges.tx.lo, -minx), hix = std::min(ranges.tx.hi, width - maxx);
    const double loy = std::max(ranges.ty.lo, -miny), hiy = std::min(ranges.ty.hi, height - maxy);
    if (lox > hix || loy > hiy) continue;
    t.tx = rng.uniform(lox, hix);
    t.ty = rng.uniform(loy, hiy);
    return t;
  }
  throw DegenerateDataError("no transform within the ranges keeps the set inside the frame");
}

SynthGallery make_synth_gallery(const SynthGalleryConfig& cfg) {
  if (cfg.gallery_size < 1 || cfg.latents < 0 || cfg.latents > cfg.gallery_size)
    throw InvalidArgument("synthetic gallery: need 0 <= latents <= gallery_size");
  SynthGallery g;
  char buf[32];
  for (int k = 0; k < cfg.gallery_size; ++k) {
    std::snprintf(buf, sizeof buf, "g%03d", k);
    MinutiaSet s = random_minutiae(cfg.points, cfg.frame, cfg.frame, 30.0, mix_seed(cfg.seed, 1000 + k));
    s.id = buf;
    g.gallery.entries.push_back({buf, std::move(s)});
  }
  static const char* categories[] = {"good", "bad", "ugly"};
  const ParamRanges ranges;
  for (int k = 0; k < cfg.latents; ++k) {
    const MinutiaSet& mate = g.gallery.entries[static_cast<std::size_t>(k)].minutiae;
    const AffineParams t0 = random_transform_within(mate, ranges, cfg.frame, cfg.frame, mix_seed(cfg.seed, 2000 + k));
    PlantedPair p = plant_transformed_pair(mate, t0, cfg.jitter, cfg.dropout, cfg.clutter, mix_seed(cfg.seed, 3000 + k));
    for (auto& m : p.l.points) {
      m.x = std::clamp(m.x, 0.0, cfg.frame);
      m.y = std::clamp(m.y, 0.0, cfg.frame);
    }
    std::snprintf(buf, sizeof buf, "q%02d", k);
    p.l.id = buf;
    g.latents.push_back({buf, std::move(p.l), mate.id, categories[k % 3]});
  }
  return g;
}

}  // namespace lfm
