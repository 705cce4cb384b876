#include <benchmark/benchmark.h>

#include "lfm/atomid.hpp"
#include "lfm/dictionary.hpp"
#include "lfm/gamatch.hpp"
#include "lfm/identify.hpp"
#include "lfm/parallel.hpp"
#include "lfm/rng.hpp"
#include "lfm/segmentation.hpp"
#include "lfm/synthgen.hpp"

using namespace lfm;

namespace {

struct Fixture {
  GrayImage image;
  PatchGrid grid;
  std::vector<PatchVector> patches;
  Dictionary dict;
  MinutiaSet c, l;
  std::vector<AffineParams> population;
  SynthGallery gallery;
  std::vector<const GalleryEntry*> subset;
  GaConfig ga;

  Fixture() {
    SynthSpec spec;
    spec.region = RegionKind::LeftHalf;
    spec.orientation = 30;
    spec.orientation_gradient_x = 0.05;
    spec.noise.lines = 6;
    spec.noise.blur = 0.8;
    image = generate(spec).image;
    grid = make_patch_grid(image, 32, 8);
    for (const auto& p : extract_patches(image, grid)) patches.push_back(normalize_patch(p));
    TrainConfig tc;
    tc.epochs = 2;
    dict = learn_dictionary(extract_patches(image, grid), tc);
    dict.set_labels(labels_from(classify_atoms_serial(dict, AtomIdConfig{})));

    c = random_minutiae(40, 500, 500, 30, 7);
    l = plant_transformed_pair(c, random_transform_within(c, ParamRanges{}, 500, 500, 8), 3, 0.2, 10, 9).l;
    Rng rng(11);
    const ParamRanges r;
    for (int i = 0; i < 400; ++i)
      population.push_back({rng.uniform(r.theta.lo, r.theta.hi), rng.uniform(r.scale.lo, r.scale.hi),
                            rng.uniform(r.tx.lo, r.tx.hi), rng.uniform(r.ty.lo, r.ty.hi)});

    SynthGalleryConfig gc;
    gc.gallery_size = 16;
    gc.latents = 1;
    gallery = make_synth_gallery(gc);
    for (const auto& e : gallery.gallery.entries) subset.push_back(&e);
    ga.max_generations = 20;
  }
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

void threads_from(benchmark::State& state) { set_thread_count(static_cast<int>(state.range(0))); }

void BM_VoteMapSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(build_vote_map_serial(fx().image, fx().dict, fx().grid, 2));
}
void BM_VoteMapParallel(benchmark::State& state) {
  threads_from(state);
  for (auto _ : state) benchmark::DoNotOptimize(build_vote_map(fx().image, fx().dict, fx().grid, 2));
}

void BM_EncodeSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(encode_batch_serial(fx().dict, fx().patches, 2));
}
void BM_EncodeParallel(benchmark::State& state) {
  threads_from(state);
  for (auto _ : state) benchmark::DoNotOptimize(encode_batch(fx().dict, fx().patches, 2));
}

void BM_ClassifySerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(classify_atoms_serial(fx().dict, AtomIdConfig{}));
}
void BM_ClassifyParallel(benchmark::State& state) {
  threads_from(state);
  for (auto _ : state) benchmark::DoNotOptimize(classify_atoms(fx().dict, AtomIdConfig{}));
}

void BM_FitnessSerial(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(evaluate_population_serial(fx().population, fx().c, fx().l, PairTolerance{}));
}
void BM_FitnessParallel(benchmark::State& state) {
  threads_from(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(evaluate_population(fx().population, fx().c, fx().l, PairTolerance{}));
}

void BM_SearchSerial(benchmark::State& state) {
  const auto& q = fx().gallery.latents.front().minutiae;
  for (auto _ : state) benchmark::DoNotOptimize(search_serial(q, fx().subset, fx().ga));
}
void BM_SearchParallel(benchmark::State& state) {
  threads_from(state);
  const auto& q = fx().gallery.latents.front().minutiae;
  for (auto _ : state) benchmark::DoNotOptimize(search(q, fx().subset, fx().ga));
}

void thread_args(benchmark::internal::Benchmark* b) {
  for (int t : {1, 2, 4, 8}) b->Arg(t);
  b->ArgName("threads")->UseRealTime()->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_VoteMapSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VoteMapParallel)->Apply(thread_args);
BENCHMARK(BM_EncodeSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EncodeParallel)->Apply(thread_args);
BENCHMARK(BM_ClassifySerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ClassifyParallel)->Apply(thread_args);
BENCHMARK(BM_FitnessSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitnessParallel)->Apply(thread_args);
BENCHMARK(BM_SearchSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SearchParallel)->Apply(thread_args);

int main(int argc, char** argv) {
  fx();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
}
