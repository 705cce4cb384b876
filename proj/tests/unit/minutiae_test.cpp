#include <doctest.h>

#include <cmath>
#include <sstream>

#include "lfm/error.hpp"
#include "lfm/minutiae.hpp"
#include "lfm/rng.hpp"
#include "lfm/synthgen.hpp"
#include "test_support.hpp"

using namespace lfm;

namespace {

MinutiaSet parse(const std::string& text) {
  std::istringstream in(text);
  return read_minutiae(in);
}

BinaryMask from_rows(const std::vector<std::string>& rows) {
  BinaryMask m(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()));
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) m.set(x, y, rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] == '#');
  return m;
}

/// Transitions counted by walking the ring explicitly.
int reference_crossing(const BinaryMask& m, int x, int y) {
  static const int ring[8][2] = {{1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}};
  int t = 0;
  for (int i = 0; i < 8; ++i) {
    const auto v = [&](int k) {
      const int nx = x + ring[k][0], ny = y + ring[k][1];
      return nx >= 0 && ny >= 0 && nx < m.width && ny < m.height && m.at(nx, ny);
    };
    t += v(i) != v((i + 1) % 8);
  }
  return t / 2;
}

}  // namespace

TEST_CASE("minutia record parsing examples") {
  const auto s = parse("10 20 90 E\n");
  REQUIRE(s.size() == 1);
  CHECK(s.points[0] == Minutia{10, 20, 90, MinutiaType::Ending});
  const auto t = parse("# comment\n\n  3.5 4.25 359.5 B\r\n0 0 0 U\n");
  CHECK(t.size() == 2);
  CHECK(t.points[0].type == MinutiaType::Bifurcation);
  CHECK(t.points[1].type == MinutiaType::Unknown);
  CHECK(parse("#id g17\n1 1 1 E\n").id == "g17");
  CHECK(parse("").empty());

  CHECK_THROWS_AS(parse("10 20 400 E\n"), ParseError);
  CHECK_THROWS_AS(parse("10 20 90 X\n"), ParseError);
  CHECK_THROWS_AS(parse("10 20 90\n"), ParseError);
  CHECK_THROWS_AS(parse("10 20 90 E extra\n"), ParseError);
  CHECK_THROWS_AS(parse("ten 20 90 E\n"), ParseError);
  CHECK_THROWS_AS(parse("-1 20 90 E\n"), ParseError);
  CHECK_THROWS_AS(parse("1 2 3 E\n1 2 3 E\n"), ParseError);
}

TEST_CASE("minutia file round trip") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    MinutiaSet s = random_minutiae(1 + static_cast<int>(rng.below(40)), 400, 300, 0, trial + 1);
    s.id = "p" + std::to_string(trial);
    for (auto& m : s.points) m.x += rng.uniform() * 1e-3;
    std::stringstream io;
    write_minutiae(io, s);
    CHECK(read_minutiae(io) == s);
  }
  const auto dir = lfm::testing::scratch_dir("minutiae_io");
  MinutiaSet s{"", {{1, 2, 3, MinutiaType::Ending}}};
  save_minutiae(s, dir / "a.min");
  const auto back = load_minutiae(dir / "a.min");
  CHECK(back.points == s.points);
  CHECK(back.id == "a");
  CHECK_THROWS_AS(load_minutiae(dir / "none.min"), InputError);
}

TEST_CASE("angle helpers") {
  CHECK(angle_difference(10, 350) == doctest::Approx(20));
  CHECK(angle_difference(0, 180) == doctest::Approx(180));
  CHECK(angle_difference(90, 90) == doctest::Approx(0));
  CHECK(wrap_degrees(-90) == doctest::Approx(270));
  CHECK(wrap_degrees(720) == doctest::Approx(0));
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(-1000, 1000), b = rng.uniform(-1000, 1000);
    const double d = angle_difference(a, b);
    CHECK(d >= 0);
    CHECK(d <= 180);
    CHECK(d == doctest::Approx(angle_difference(b, a)));
    CHECK(d == doctest::Approx(lfm::testing::circ_gap(wrap_degrees(a), wrap_degrees(b))));
  }
}

TEST_CASE("masking by ROI") {
  const MinutiaSet s{"x", {{5, 5, 0, MinutiaType::Ending}, {50, 50, 0, MinutiaType::Ending}, {10, 0, 0, MinutiaType::Ending}}};
  const RoiPolygon box{{{0, 0}, {10, 0}, {10, 10}, {0, 10}}};
  const auto in = mask_by_roi(s, box);
  CHECK(in.size() == 2);
  CHECK(in.id == "x");
  CHECK(mask_by_roi(s, RoiPolygon{}).empty());
  const RoiPolygon on_vertex{{{10, 0}, {20, 0}, {20, 10}}};
  CHECK(mask_by_roi(s, on_vertex).size() == 1);

  Rng rng(9);
  const auto many = random_minutiae(200, 300, 300, 0, 4);
  for (int trial = 0; trial < 30; ++trial) {
    const double x0 = rng.uniform(0, 100), y0 = rng.uniform(0, 100);
    const double x1 = rng.uniform(150, 300), y1 = rng.uniform(150, 300);
    const double g = rng.uniform(5, 40);
    const RoiPolygon outer{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}};
    const RoiPolygon inner{{{x0 + g, y0 + g}, {x1 - g, y0 + g}, {x1 - g, y1 - g}, {x0 + g, y1 - g}}};
    const auto a = mask_by_roi(many, outer), b = mask_by_roi(many, inner);
    CHECK(b.size() <= a.size());
    for (const auto& m : b.points) CHECK(std::find(a.points.begin(), a.points.end(), m) != a.points.end());
    for (const auto& m : a.points) CHECK(outer.contains({m.x, m.y}));
  }
}

TEST_CASE("crossing number on hand-drawn skeletons") {
  const auto line = from_rows({".....", ".....", "#####", ".....", "....."});
  CHECK(crossing_number(line, 2, 2) == 2);
  CHECK(crossing_number(line, 0, 2) == 1);
  const auto fork = from_rows({"#...#", ".#.#.", "..#..", "..#..", "..#.."});
  CHECK(crossing_number(fork, 2, 2) == 3);
  const auto end = from_rows({".....", ".....", "..###", ".....", "....."});
  CHECK(crossing_number(end, 2, 2) == 1);

  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    BinaryMask m(3, 3);
    for (auto& b : m.bits) b = rng.uniform() < 0.5;
    m.set(1, 1, true);
    CHECK(crossing_number(m, 1, 1) == reference_crossing(m, 1, 1));
  }
}

TEST_CASE("thinning keeps connectivity and yields one-pixel strokes") {
  BinaryMask bar(40, 20);
  for (int y = 7; y < 13; ++y)
    for (int x = 5; x < 35; ++x) bar.set(x, y, true);
  const auto sk = thin(bar);
  CHECK(sk.count() > 0);
  for (std::size_t i = 0; i < sk.bits.size(); ++i)
    if (sk.bits[i]) CHECK(bar.bits[i]);
  int n = 0;
  label_components(sk, &n);
  CHECK(n == 1);
  for (int x = 10; x < 30; ++x) {
    int col = 0;
    for (int y = 0; y < 20; ++y) col += sk.at(x, y);
    CHECK(col == 1);
  }
  CHECK(thin(sk).bits == sk.bits);
}

TEST_CASE("planted minutiae are recovered") {
  int hits = 0;
  for (int k = 0; k < 24; ++k) {
    SynthSpec s;
    s.orientation = 15.0 * k;
    s.seed = static_cast<std::uint64_t>(k + 1);
    const auto type = k % 2 ? MinutiaType::Bifurcation : MinutiaType::Ending;
    s.minutiae.push_back({128, 128, type, k % 4 < 2 ? 1 : -1});
    const auto r = generate(s);
    const auto found = extract_minutiae(r.image);
    const auto& truth = r.minutiae.points.at(0);
    for (const auto& p : found.points)
      if (std::hypot(p.x - truth.x, p.y - truth.y) <= 6 && angle_difference(p.orientation, truth.orientation) <= 25 &&
          p.type == truth.type) {
        ++hits;
        break;
      }
  }
  CHECK(hits >= 20);
}

TEST_CASE("extractor on featureless inputs and determinism") {
  CHECK(extract_minutiae(GrayImage(128, 128, 200)).empty());
  SynthSpec plain;
  plain.orientation = 40;
  CHECK(extract_minutiae(generate(plain).image).size() <= 2);

  SynthSpec s;
  s.orientation = 60;
  s.minutiae = {{90, 100, MinutiaType::Ending, 1}, {170, 150, MinutiaType::Bifurcation, -1}};
  s.noise.sigma = 10;
  const auto img = generate(s).image;
  const auto a = extract_minutiae(img), b = extract_minutiae(img);
  CHECK(a == b);
  CHECK_NOTHROW(a.validate());
  const RoiPolygon left{{{0, 0}, {128, 0}, {128, 256}, {0, 256}}};
  const auto masked = extract_minutiae(img, left);
  for (const auto& m : masked.points) CHECK(left.contains({m.x, m.y}));
  CHECK(extract_minutiae(img, RoiPolygon{}).empty());
}
