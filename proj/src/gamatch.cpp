#include "lfm/gamatch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "lfm/error.hpp"
#include "lfm/rng.hpp"

namespace lfm {

void GaConfig::validate() const {
  if (population < 2) throw ConfigError("population must be >= 2");
  if (!(crossover_prob >= 0 && crossover_prob <= 1)) throw ConfigError("crossover_prob must be in [0, 1]");
  if (!(mutation_prob >= 0 && mutation_prob <= 1)) throw ConfigError("mutation_prob must be in [0, 1]");
  if (max_generations < 0) throw ConfigError("max_generations must be >= 0");
  if (stall_generations < 1) throw ConfigError("stall_generations must be >= 1");
  if (!(tol.delta_d > 0) || !(tol.delta_o > 0)) throw ConfigError("pairing tolerances must be > 0");
  for (const Range* r : {&ranges.theta, &ranges.scale, &ranges.tx, &ranges.ty})
    if (!(r->lo <= r->hi)) throw ConfigError("parameter range has lo > hi");
  if (!(seeded_fraction >= 0 && seeded_fraction <= 1)) throw ConfigError("seeded_fraction must be in [0, 1]");
  if (ranges.scale.lo <= 0) throw ConfigError("scale range must be positive");
}

Minutia apply_transform(const AffineParams& t, const Minutia& m) {
  const double rad = t.theta * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  return {t.scale * (c * m.x - s * m.y) + t.tx, t.scale * (s * m.x + c * m.y) + t.ty,
          wrap_degrees(m.orientation + t.theta), m.type};
}

std::vector<Minutia> apply_transform(const AffineParams& t, const std::vector<Minutia>& pts) {
  std::vector<Minutia> out;
  out.reserve(pts.size());
  for (const auto& m : pts) out.push_back(apply_transform(t, m));
  return out;
}

namespace {

bool types_compatible(MinutiaType a, MinutiaType b) {
  return a == b || a == MinutiaType::Unknown || b == MinutiaType::Unknown;
}

struct Candidate {
  double ed;
  double eo;
  int i;
  int j;
};

PairResult pair_impl(const std::vector<Minutia>& tc, const std::vector<Minutia>& l, const PairTolerance& tol,
                     bool want_pairs) {
  std::vector<Candidate> cand;
  const double dd2 = tol.delta_d * tol.delta_d;
  for (int i = 0; i < static_cast<int>(tc.size()); ++i)
    for (int j = 0; j < static_cast<int>(l.size()); ++j) {
      const auto& a = tc[static_cast<std::size_t>(i)];
      const auto& b = l[static_cast<std::size_t>(j)];
      const double dx = a.x - b.x, dy = a.y - b.y;
      const double d2 = dx * dx + dy * dy;
      if (d2 > dd2) continue;
      const double eo = angle_difference(a.orientation, b.orientation);
      if (eo > tol.delta_o || !types_compatible(a.type, b.type)) continue;
      cand.push_back({std::sqrt(d2), eo, i, j});
    }
  std::sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) {
    if (a.ed != b.ed) return a.ed < b.ed;
    if (a.eo != b.eo) return a.eo < b.eo;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  std::vector<char> used_c(tc.size(), 0), used_l(l.size(), 0);
  PairResult r;
  for (const auto& c : cand) {
    if (used_c[static_cast<std::size_t>(c.i)] || used_l[static_cast<std::size_t>(c.j)]) continue;
    used_c[static_cast<std::size_t>(c.i)] = used_l[static_cast<std::size_t>(c.j)] = 1;
    ++r.count;
    if (want_pairs) r.pairs.emplace_back(c.i, c.j);
  }
  return r;
}

AffineParams random_params(const ParamRanges& r, Rng& rng) {
  return {rng.uniform(r.theta.lo, r.theta.hi), rng.uniform(r.scale.lo, r.scale.hi), rng.uniform(r.tx.lo, r.tx.hi),
          rng.uniform(r.ty.lo, r.ty.hi)};
}

double& gene(AffineParams& p, int k) {
  switch (k) {
    case 0: return p.theta;
    case 1: return p.scale;
    case 2: return p.tx;
    default: return p.ty;
  }
}

const Range& gene_range(const ParamRanges& r, int k) {
  switch (k) {
    case 0: return r.theta;
    case 1: return r.scale;
    case 2: return r.tx;
    default: return r.ty;
  }
}

AffineParams pair_hypothesis(const MinutiaSet& c, const MinutiaSet& l, const ParamRanges& r, Rng& rng) {
  for (int attempt = 0; attempt < 20; ++attempt) {
    const Minutia& a = c.points[static_cast<std::size_t>(rng.below(c.size()))];
    const Minutia& b = l.points[static_cast<std::size_t>(rng.below(l.size()))];
    AffineParams p{wrap_degrees(b.orientation - a.orientation), rng.uniform(r.scale.lo, r.scale.hi), 0.0, 0.0};
    if (!types_compatible(a.type, b.type) || !r.theta.contains(p.theta)) continue;
    const Minutia moved = apply_transform(p, a);
    p.tx = b.x - moved.x;
    p.ty = b.y - moved.y;
    if (r.contains(p)) return p;
  }
  return random_params(r, rng);
}

std::size_t roulette(const std::vector<double>& cumulative, Rng& rng) {
  const double x = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
  return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

}  // namespace

PairResult pair_and_count(const std::vector<Minutia>& transformed_c, const std::vector<Minutia>& l,
                          const PairTolerance& tol) {
  return pair_impl(transformed_c, l, tol, true);
}

int fitness(const AffineParams& t, const MinutiaSet& c, const MinutiaSet& l, const PairTolerance& tol) {
  return pair_impl(apply_transform(t, c.points), l.points, tol, false).count;
}

std::vector<int> evaluate_population(const std::vector<AffineParams>& pop, const MinutiaSet& c, const MinutiaSet& l,
                                     const PairTolerance& tol) {
  std::vector<int> f(pop.size());
  const long n = static_cast<long>(pop.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) f[static_cast<std::size_t>(i)] = fitness(pop[static_cast<std::size_t>(i)], c, l, tol);
  return f;
}

std::vector<int> evaluate_population_serial(const std::vector<AffineParams>& pop, const MinutiaSet& c,
                                            const MinutiaSet& l, const PairTolerance& tol) {
  std::vector<int> f(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) f[i] = fitness(pop[i], c, l, tol);
  return f;
}

AffineParams refine_transform(const AffineParams& start, const MinutiaSet& c, const MinutiaSet& l,
                              const PairTolerance& tol, const ParamRanges& ranges) {
  AffineParams t = start;
  int best = fitness(t, c, l, tol);
  for (int iter = 0; iter < 10; ++iter) {
    const PairResult pr = pair_and_count(apply_transform(t, c.points), l.points, tol);
    if (pr.count < 2) break;
    double mcx = 0, mcy = 0, mlx = 0, mly = 0;
    for (const auto& [i, j] : pr.pairs) {
      mcx += c.points[static_cast<std::size_t>(i)].x;
      mcy += c.points[static_cast<std::size_t>(i)].y;
      mlx += l.points[static_cast<std::size_t>(j)].x;
      mly += l.points[static_cast<std::size_t>(j)].y;
    }
    const double n = pr.count;
    mcx /= n, mcy /= n, mlx /= n, mly /= n;
    double dot = 0, cross = 0, var = 0;
    for (const auto& [i, j] : pr.pairs) {
      const double ax = c.points[static_cast<std::size_t>(i)].x - mcx, ay = c.points[static_cast<std::size_t>(i)].y - mcy;
      const double bx = l.points[static_cast<std::size_t>(j)].x - mlx, by = l.points[static_cast<std::size_t>(j)].y - mly;
      dot += ax * bx + ay * by;
      cross += ax * by - ay * bx;
      var += ax * ax + ay * ay;
    }
    if (var <= 0) break;
    const double rad = std::atan2(cross, dot);
    AffineParams next{wrap_degrees(rad * 180.0 / std::numbers::pi), std::hypot(dot, cross) / var, 0.0, 0.0};
    next.theta = ranges.theta.clamp(next.theta);
    next.scale = ranges.scale.clamp(next.scale);
    const Minutia centre = apply_transform(next, Minutia{mcx, mcy, 0.0, MinutiaType::Unknown});
    next.tx = ranges.tx.clamp(mlx - centre.x);
    next.ty = ranges.ty.clamp(mly - centre.y);
    const int f = fitness(next, c, l, tol);
    if (f < best || next == t) break;
    best = f;
    t = next;
  }
  return t;
}

namespace {

MatchResult run_ga_impl(const MinutiaSet& c, const MinutiaSet& l, const GaConfig& cfg, PopulationObserver observer,
                        void* observer_ctx, bool serial) {
  cfg.validate();
  if (c.empty() || l.empty()) throw InvalidArgument("run_ga needs non-empty minutiae sets");

  const auto S = static_cast<std::size_t>(cfg.population);
  std::vector<AffineParams> pop(S);
  {
    Rng rng(mix_seed(cfg.seed, 0));
    for (auto& p : pop)
      p = rng.uniform() < cfg.seeded_fraction ? pair_hypothesis(c, l, cfg.ranges, rng) : random_params(cfg.ranges, rng);
  }

  MatchResult result;
  AffineParams best{};
  int best_fit = -1;
  int stall = 0;
  int generation = 0;

  while (true) {
    if (observer) observer(pop, observer_ctx);
    const std::vector<int> fit =
        serial ? evaluate_population_serial(pop, c, l, cfg.tol) : evaluate_population(pop, c, l, cfg.tol);
    const auto top = static_cast<std::size_t>(std::max_element(fit.begin(), fit.end()) - fit.begin());
    if (fit[top] > best_fit) {
      best_fit = fit[top];
      best = pop[top];
      stall = 0;
    } else {
      ++stall;
    }
    result.fitness_history.push_back(best_fit);
    if (generation >= cfg.max_generations || stall >= cfg.stall_generations) break;

    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(generation) + 1));
    std::vector<double> cumulative(S);
    double acc = 0;
    for (std::size_t i = 0; i < S; ++i) cumulative[i] = acc += fit[i] + 1.0;

    std::vector<AffineParams> next;
    next.reserve(S);
    next.push_back(best);
    while (next.size() < S) {
      AffineParams a = pop[roulette(cumulative, rng)];
      AffineParams b = pop[roulette(cumulative, rng)];
      if (rng.uniform() < cfg.crossover_prob) {
        // Two cut points among the three gene boundaries.
        int p = 1 + static_cast<int>(rng.below(3));
        int q = 1 + static_cast<int>(rng.below(3));
        if (p > q) std::swap(p, q);
        if (p == q) q = 4;
        for (int k = p; k < q; ++k) std::swap(gene(a, k), gene(b, k));
      }
      for (AffineParams* child : {&a, &b}) {
        for (int k = 0; k < 4; ++k)
          if (rng.uniform() < cfg.mutation_prob) {
            const Range& r = gene_range(cfg.ranges, k);
            gene(*child, k) = rng.uniform(r.lo, r.hi);
          }
        if (next.size() < S) next.push_back(*child);
      }
    }
    pop = std::move(next);
    ++generation;
  }

  result.generations = generation;
  result.transform = cfg.refine ? refine_transform(best, c, l, cfg.tol, cfg.ranges) : best;
  auto pr = pair_and_count(apply_transform(result.transform, c.points), l.points, cfg.tol);
  result.score = pr.count;
  result.pairs = std::move(pr.pairs);
  return result;
}

}  // namespace

MatchResult run_ga(const MinutiaSet& c, const MinutiaSet& l, const GaConfig& cfg, PopulationObserver observer,
                   void* observer_ctx) {
  return run_ga_impl(c, l, cfg, observer, observer_ctx, false);
}

MatchResult run_ga_serial(const MinutiaSet& c, const MinutiaSet& l, const GaConfig& cfg) {
  return run_ga_impl(c, l, cfg, nullptr, nullptr, true);
}

void write_match(std::ostream& out, const MatchResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "transform %.6f %.6f %.6f %.6f\n", r.transform.theta, r.transform.scale,
                r.transform.tx, r.transform.ty);
  out << "score " << r.score << '\n' << buf;
  for (const auto& [ci, lj] : r.pairs) out << ci << ' ' << lj << '\n';
}

void write_fitness_csv(std::ostream& out, const MatchResult& r) {
  out << "generation,best_fitness\n";
  for (std::size_t g = 0; g < r.fitness_history.size(); ++g) out << g << ',' << r.fitness_history[g] << '\n';
}

}  // namespace lfm
