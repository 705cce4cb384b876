#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "lfm/minutiae.hpp"

namespace lfm {

/// Rotation in degrees, isotropic scale, translation in pixels.
struct AffineParams {
  double theta = 0.0;
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
  friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
  double clamp(double v) const noexcept { return v < lo ? lo : (v > hi ? hi : v); }
};

struct ParamRanges {
  Range theta{0.0, 359.0};
  Range scale{0.8, 1.2};
  Range tx{-400.0, 400.0};
  Range ty{-400.0, 400.0};

  bool contains(const AffineParams& p) const noexcept {
    return theta.contains(p.theta) && scale.contains(p.scale) && tx.contains(p.tx) && ty.contains(p.ty);
  }
};

struct PairTolerance {
  double delta_d = 15.0;
  double delta_o = 20.0;
};

struct GaConfig {
  int population = 400;
  double crossover_prob = 0.2;
  double mutation_prob = 0.05;
  int max_generations = 200;
  int stall_generations = 30;
  /// Share of the initial population drawn from single-pair hypotheses (a random
  /// compatible (c, l) pair fixes theta and the translation for a random scale);
  /// the rest is uniform over the ranges.
  double seeded_fraction = 0.5;
  /// Least-squares similarity fit on the final pairing, kept only if the pair count does not drop.
  bool refine = true;
  PairTolerance tol;
  ParamRanges ranges;
  std::uint64_t seed = 1;

  void validate() const;
};

using IndexPair = std::pair<int, int>;  // (index in C, index in L)

struct PairResult {
  int count = 0;
  std::vector<IndexPair> pairs;
};

struct MatchResult {
  int score = 0;
  AffineParams transform;
  std::vector<IndexPair> pairs;
  std::vector<int> fitness_history;  ///< best fitness after each generation, initial population first
  int generations = 0;
};

/// x' = s R(theta) x + t; orientation rotated by theta; type kept.
Minutia apply_transform(const AffineParams& t, const Minutia& m);
std::vector<Minutia> apply_transform(const AffineParams& t, const std::vector<Minutia>& pts);

/// Candidate pairs need distance <= delta_d, circular orientation difference <= delta_o and
/// compatible types (Unknown matches anything). One-to-one, greedy by ascending distance,
/// then orientation difference, then indices.
PairResult pair_and_count(const std::vector<Minutia>& transformed_c, const std::vector<Minutia>& l,
                          const PairTolerance& tol);

int fitness(const AffineParams& t, const MinutiaSet& c, const MinutiaSet& l, const PairTolerance& tol);

/// Fitness of every chromosome; OpenMP-parallel.
std::vector<int> evaluate_population(const std::vector<AffineParams>& pop, const MinutiaSet& c, const MinutiaSet& l,
                                     const PairTolerance& tol);
std::vector<int> evaluate_population_serial(const std::vector<AffineParams>& pop, const MinutiaSet& c,
                                            const MinutiaSet& l, const PairTolerance& tol);

/// Optional hook called with every population before it is evaluated.
using PopulationObserver = void (*)(const std::vector<AffineParams>&, void*);

/// One Procrustes step: best similarity transform for the pairs of `t`, clamped to the ranges.
/// Iterated while the pair count does not drop; returns `t` unchanged with fewer than 2 pairs.
AffineParams refine_transform(const AffineParams& t, const MinutiaSet& c, const MinutiaSet& l, const PairTolerance& tol,
                              const ParamRanges& ranges);

MatchResult run_ga(const MinutiaSet& c, const MinutiaSet& l, const GaConfig& cfg,
                   PopulationObserver observer = nullptr, void* observer_ctx = nullptr);
/// run_ga with serial fitness evaluation.
MatchResult run_ga_serial(const MinutiaSet& c, const MinutiaSet& l, const GaConfig& cfg);

/// "score N", "transform theta s tx ty", then one "ci lj" line per pair.
void write_match(std::ostream& out, const MatchResult& r);
/// "generation,best_fitness" rows.
void write_fitness_csv(std::ostream& out, const MatchResult& r);

}  // namespace lfm
