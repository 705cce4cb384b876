#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "lfm/error.hpp"
#include "lfm/gamatch.hpp"
#include "lfm/parallel.hpp"
#include "lfm/rng.hpp"
#include "lfm/synthgen.hpp"
#include "test_support.hpp"

using namespace lfm;

namespace {

bool types_compatible(MinutiaType a, MinutiaType b) {
  return a == MinutiaType::Unknown || b == MinutiaType::Unknown || a == b;
}

bool candidate(const Minutia& c, const Minutia& l, const PairTolerance& tol) {
  return std::hypot(c.x - l.x, c.y - l.y) <= tol.delta_d &&
         lfm::testing::circ_gap(c.orientation, l.orientation) <= tol.delta_o && types_compatible(c.type, l.type);
}

/// Sort every candidate edge by (distance, orientation gap, i, j) and accept greedily.
std::vector<IndexPair> reference_pairing(const std::vector<Minutia>& c, const std::vector<Minutia>& l,
                                         const PairTolerance& tol) {
  std::vector<std::tuple<double, double, int, int>> edges;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < l.size(); ++j)
      if (candidate(c[i], l[j], tol))
        edges.emplace_back(std::hypot(c[i].x - l[j].x, c[i].y - l[j].y),
                           lfm::testing::circ_gap(c[i].orientation, l[j].orientation), static_cast<int>(i),
                           static_cast<int>(j));
  std::sort(edges.begin(), edges.end());
  std::vector<bool> uc(c.size()), ul(l.size());
  std::vector<IndexPair> out;
  for (const auto& [d, o, i, j] : edges) {
    if (uc[static_cast<std::size_t>(i)] || ul[static_cast<std::size_t>(j)]) continue;
    uc[static_cast<std::size_t>(i)] = ul[static_cast<std::size_t>(j)] = true;
    out.emplace_back(i, j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

MinutiaSet cluster(int n, double extent, std::uint64_t seed) {
  Rng rng(seed);
  MinutiaSet s;
  for (int i = 0; i < n; ++i) {
    const MinutiaType t = rng.below(3) == 0 ? MinutiaType::Unknown : (rng.below(2) ? MinutiaType::Ending : MinutiaType::Bifurcation);
    s.points.push_back({rng.uniform(0, extent), rng.uniform(0, extent), rng.uniform(0, 360), t});
  }
  return s;
}

struct RangeWatch {
  ParamRanges ranges;
  std::size_t populations = 0;
  std::size_t outside = 0;
  std::size_t size_mismatch = 0;
  int expected_size = 0;
};

void watch(const std::vector<AffineParams>& pop, void* ctx) {
  auto* w = static_cast<RangeWatch*>(ctx);
  ++w->populations;
  if (static_cast<int>(pop.size()) != w->expected_size) ++w->size_mismatch;
  for (const auto& p : pop) w->outside += !w->ranges.contains(p);
}

}  // namespace

TEST_CASE("transform examples") {
  const Minutia m{1, 0, 10, MinutiaType::Bifurcation};
  const auto r = apply_transform(AffineParams{90, 1, 0, 0}, m);
  CHECK(r.x == doctest::Approx(0).epsilon(1e-12));
  CHECK(r.y == doctest::Approx(1));
  CHECK(r.orientation == doctest::Approx(100));
  CHECK(r.type == MinutiaType::Bifurcation);
  const auto s = apply_transform(AffineParams{0, 2, 3, 4}, Minutia{1, 1, 0, MinutiaType::Ending});
  CHECK(s.x == doctest::Approx(5));
  CHECK(s.y == doctest::Approx(6));
  const auto w = apply_transform(AffineParams{350, 1, 0, 0}, Minutia{0, 0, 20, MinutiaType::Ending});
  CHECK(w.orientation == doctest::Approx(10));

  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const AffineParams a{rng.uniform(0, 359), rng.uniform(0.8, 1.2), rng.uniform(-50, 50), rng.uniform(-50, 50)};
    const Minutia p{rng.uniform(0, 300), rng.uniform(0, 300), rng.uniform(0, 360), MinutiaType::Ending};
    const Minutia q{rng.uniform(0, 300), rng.uniform(0, 300), 0, MinutiaType::Ending};
    const auto tp = apply_transform(a, p), tq = apply_transform(a, q);
    CHECK(std::hypot(tp.x - tq.x, tp.y - tq.y) == doctest::Approx(a.scale * std::hypot(p.x - q.x, p.y - q.y)));
    CHECK(tp.orientation >= 0);
    CHECK(tp.orientation < 360);
  }
}

TEST_CASE("pairing: worked examples") {
  const PairTolerance tol{};
  const std::vector<Minutia> c{{0, 0, 0, MinutiaType::Ending}};
  CHECK(pair_and_count(c, {{10, 0, 15, MinutiaType::Ending}}, tol).count == 1);
  CHECK(pair_and_count(c, {{16, 0, 0, MinutiaType::Ending}}, tol).count == 0);
  CHECK(pair_and_count(c, {{0, 0, 25, MinutiaType::Ending}}, tol).count == 0);
  CHECK(pair_and_count(c, {{0, 0, 350, MinutiaType::Ending}}, tol).count == 1);
  CHECK(pair_and_count(c, {{0, 0, 0, MinutiaType::Bifurcation}}, tol).count == 0);
  CHECK(pair_and_count(c, {{0, 0, 0, MinutiaType::Unknown}}, tol).count == 1);
  CHECK(pair_and_count({}, {{0, 0, 0, MinutiaType::Unknown}}, tol).count == 0);
  // Two L points near one C point: one-to-one, nearer wins.
  const auto r = pair_and_count(c, {{8, 0, 0, MinutiaType::Ending}, {3, 0, 0, MinutiaType::Ending}}, tol);
  CHECK(r.count == 1);
  REQUIRE(r.pairs.size() == 1);
  CHECK(r.pairs[0] == IndexPair{0, 1});
}

TEST_CASE("pairing agrees with an edge-sorting reference and is maximal") {
  Rng rng(7);
  const PairTolerance tol{};
  for (int trial = 0; trial < 300; ++trial) {
    const int nc = static_cast<int>(rng.below(9)), nl = static_cast<int>(rng.below(9));
    const auto c = cluster(nc, 40, rng.next_u64());
    const auto l = cluster(nl, 40, rng.next_u64());
    const auto got = pair_and_count(c.points, l.points, tol);
    auto sorted = got.pairs;
    std::sort(sorted.begin(), sorted.end());
    CHECK(got.count == static_cast<int>(got.pairs.size()));
    CHECK(sorted == reference_pairing(c.points, l.points, tol));

    std::vector<std::vector<bool>> adj(static_cast<std::size_t>(nc), std::vector<bool>(static_cast<std::size_t>(nl)));
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nl; ++j)
        adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = candidate(c.points[static_cast<std::size_t>(i)], l.points[static_cast<std::size_t>(j)], tol);
    const int best = lfm::testing::max_matching_bruteforce(adj);
    CHECK(got.count <= best);
    CHECK(2 * got.count >= best);
    std::set<int> ci, lj;
    for (const auto& [i, j] : got.pairs) {
      CHECK(ci.insert(i).second);
      CHECK(lj.insert(j).second);
      CHECK(adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
    }
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nl; ++j)
        if (adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) CHECK((ci.count(i) || lj.count(j)));
  }
}

TEST_CASE("fitness examples") {
  const auto c = random_minutiae(25, 400, 400, 20, 3);
  const PairTolerance tol{};
  CHECK(fitness(AffineParams{}, c, c, tol) == 25);
  const AffineParams t{37, 1.1, 20, -15};
  MinutiaSet l;
  l.points = apply_transform(t, c.points);
  CHECK(fitness(t, c, l, tol) == 25);
  CHECK(fitness(AffineParams{180, 1, 0, 0}, c, c, tol) <= 3);
  CHECK(fitness(t, c, MinutiaSet{}, tol) == 0);
}

TEST_CASE("parallel population evaluation equals the serial loop") {
  const auto c = random_minutiae(40, 500, 500, 20, 1);
  const auto l = random_minutiae(35, 500, 500, 20, 2);
  Rng rng(3);
  std::vector<AffineParams> pop;
  for (int i = 0; i < 600; ++i)
    pop.push_back({rng.uniform(0, 359), rng.uniform(0.8, 1.2), rng.uniform(-100, 100), rng.uniform(-100, 100)});
  const auto serial = evaluate_population_serial(pop, c, l, PairTolerance{});
  for (int t : {1, 2, 4}) {
    set_thread_count(t);
    CHECK(evaluate_population(pop, c, l, PairTolerance{}) == serial);
  }
  set_thread_count(0);
}

TEST_CASE("GA recovers a planted transform without noise") {
  const auto base = random_minutiae(30, 500, 500, 30, 11);
  int full = 0;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const auto t0 = random_transform_within(base, ParamRanges{}, 500, 500, s);
    const auto pp = plant_transformed_pair(base, t0, 0, 0, 0, s);
    GaConfig cfg;
    cfg.seed = s;
    const auto r = run_ga(pp.c, pp.l, cfg);
    full += r.score == 30;
    CHECK(r.score >= 27);
  }
  CHECK(full >= 4);
}

TEST_CASE("GA invariants: bounds, elitism, ranges, determinism") {
  const auto base = random_minutiae(25, 500, 500, 30, 21);
  const auto t0 = random_transform_within(base, ParamRanges{}, 500, 500, 5);
  const auto pp = plant_transformed_pair(base, t0, 3, 0.2, 8, 5);
  GaConfig cfg;
  cfg.population = 120;
  cfg.max_generations = 60;
  cfg.seed = 9;
  RangeWatch w{cfg.ranges, 0, 0, 0, cfg.population};
  const auto r = run_ga(pp.c, pp.l, cfg, watch, &w);
  CHECK(r.score <= static_cast<int>(std::min(pp.c.size(), pp.l.size())));
  CHECK(r.score >= 0);
  CHECK(w.populations >= 1);
  CHECK(w.outside == 0);
  CHECK(w.size_mismatch == 0);
  CHECK(cfg.ranges.contains(r.transform));
  CHECK(r.generations <= cfg.max_generations);
  REQUIRE_FALSE(r.fitness_history.empty());
  CHECK(std::is_sorted(r.fitness_history.begin(), r.fitness_history.end()));
  CHECK(r.score >= r.fitness_history.back());
  CHECK(r.score == static_cast<int>(r.pairs.size()));
  CHECK(r.score == fitness(r.transform, pp.c, pp.l, cfg.tol));

  const auto moved = apply_transform(r.transform, pp.c.points);
  std::set<int> ci, lj;
  for (const auto& [i, j] : r.pairs) {
    REQUIRE(i >= 0);
    REQUIRE(j >= 0);
    REQUIRE(i < static_cast<int>(pp.c.size()));
    REQUIRE(j < static_cast<int>(pp.l.size()));
    CHECK(ci.insert(i).second);
    CHECK(lj.insert(j).second);
    CHECK(candidate(moved[static_cast<std::size_t>(i)], pp.l.points[static_cast<std::size_t>(j)], cfg.tol));
  }

  const auto again = run_ga(pp.c, pp.l, cfg);
  CHECK(again.score == r.score);
  CHECK(again.transform == r.transform);
  CHECK(again.pairs == r.pairs);
  CHECK(again.fitness_history == r.fitness_history);
  set_thread_count(3);
  CHECK(run_ga(pp.c, pp.l, cfg).fitness_history == r.fitness_history);
  set_thread_count(0);
  const auto serial = run_ga_serial(pp.c, pp.l, cfg);
  CHECK(serial.fitness_history == r.fitness_history);
  CHECK(serial.transform == r.transform);
  CHECK(serial.pairs == r.pairs);
}

TEST_CASE("GA with no generations evaluates only the initial population") {
  const auto c = random_minutiae(10, 300, 300, 10, 1);
  GaConfig cfg;
  cfg.population = 30;
  cfg.max_generations = 0;
  cfg.refine = false;
  const auto r = run_ga(c, c, cfg);
  CHECK(r.fitness_history.size() == 1);
  CHECK(r.generations == 0);
  CHECK(r.score == r.fitness_history[0]);
}

TEST_CASE("impostor scores stay low") {
  std::vector<int> scores;
  for (std::uint64_t s = 1; s <= 7; ++s) {
    const auto c = random_minutiae(30, 500, 500, 30, 100 + s);
    const auto l = random_minutiae(30, 500, 500, 30, 200 + s);
    GaConfig cfg;
    cfg.seed = s;
    scores.push_back(run_ga(c, l, cfg).score);
  }
  std::sort(scores.begin(), scores.end());
  CHECK(scores[scores.size() / 2] <= 6);
}

TEST_CASE("refinement never loses pairs") {
  const auto base = random_minutiae(30, 500, 500, 30, 41);
  const AffineParams t0{75, 1.05, 40, -30};
  const auto pp = plant_transformed_pair(base, t0, 2.5, 0.1, 5, 2);
  const AffineParams rough{78, 1.0, 50, -20};
  const auto refined = refine_transform(rough, pp.c, pp.l, PairTolerance{}, ParamRanges{});
  CHECK(fitness(refined, pp.c, pp.l, PairTolerance{}) >= fitness(rough, pp.c, pp.l, PairTolerance{}));
  CHECK(ParamRanges{}.contains(refined));
  const AffineParams nowhere{0, 1, 2000, 2000};
  CHECK(refine_transform(nowhere, pp.c, pp.l, PairTolerance{}, ParamRanges{}) == nowhere);
}

TEST_CASE("GA config validation") {
  GaConfig c;
  c.population = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = GaConfig{};
  c.mutation_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = GaConfig{};
  c.ranges.scale = {1.2, 0.8};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = GaConfig{};
  c.tol.delta_d = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("match output formats") {
  MatchResult r;
  r.score = 2;
  r.transform = {12.5, 1.0, -3, 4};
  r.pairs = {{0, 3}, {4, 1}};
  r.fitness_history = {1, 2, 2};
  std::ostringstream m;
  write_match(m, r);
  CHECK(m.str() == "score 2\ntransform 12.500000 1.000000 -3.000000 4.000000\n0 3\n4 1\n");
  std::ostringstream f;
  write_fitness_csv(f, r);
  CHECK(f.str() == "generation,best_fitness\n0,1\n1,2\n2,2\n");
}
