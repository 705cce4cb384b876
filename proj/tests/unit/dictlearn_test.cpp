#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "lfm/dictionary.hpp"
#include "lfm/error.hpp"
#include "lfm/rng.hpp"
#include "lfm/synthgen.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace lfm;
using namespace lfm::testing;

namespace {

std::vector<PatchVector> ridge_patches(std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.orientation = 13.0 * static_cast<double>(seed);
  spec.orientation_gradient_x = 0.08;
  return extract_patches(generate(spec).image, 32, 8);
}

}  // namespace

TEST_CASE("OMP recovers an atom exactly") {
  Rng rng(1);
  const Dictionary D(random_matrix(16, 10, rng));
  for (int j = 0; j < 10; ++j)
    for (int K = 1; K <= 3; ++K) {
      const Eigen::VectorXd s = D.atom(j);
      const auto code = omp_encode(D, std::vector<double>(s.data(), s.data() + s.size()), K);
      REQUIRE(code.nnz() == 1);
      CHECK(code.indices[0] == j);
      CHECK(code.values[0] == doctest::Approx(1.0).epsilon(1e-9));
      const auto rec = reconstruct(D, code);
      for (int i = 0; i < 16; ++i) CHECK(rec[static_cast<std::size_t>(i)] == doctest::Approx(s(i)).epsilon(1e-9));
    }
}

TEST_CASE("OMP on zero input and identity dictionary") {
  const Dictionary I(Eigen::MatrixXd::Identity(4, 4));
  CHECK(omp_encode(I, std::vector<double>{0, 0, 0, 0}, 2).nnz() == 0);
  const auto code = omp_encode(I, std::vector<double>{3, 0, 0, 4}, 2);
  CHECK(code.indices == std::vector<int>{0, 3});
  CHECK(code.values[0] == doctest::Approx(3.0));
  CHECK(code.values[1] == doctest::Approx(4.0));
  for (double v : reconstruct(I, SparseCode{{}, {}, 4})) CHECK(v == 0.0);
  const auto one = reconstruct(I, SparseCode{{2}, {-1.5}, 4});
  CHECK(one == std::vector<double>{0, 0, -1.5, 0});
}

TEST_CASE("OMP support equals an independent greedy reference") {
  Rng rng(7);
  int cases = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int ns = 2 + static_cast<int>(rng.below(7));
    const int na = 1 + static_cast<int>(rng.below(8));
    const int K = 1 + static_cast<int>(rng.below(std::min(3, na)));
    const Dictionary D(random_matrix(ns, na, rng));
    Eigen::VectorXd s(ns);
    for (int i = 0; i < ns; ++i) s(i) = rng.normal();
    const auto code = omp_encode(D, std::vector<double>(s.data(), s.data() + ns), K);
    CHECK(code.indices == reference_omp_support(D.atoms(), s, K));
    CHECK(code.nnz() <= static_cast<std::size_t>(K));
    CHECK(std::is_sorted(code.indices.begin(), code.indices.end()));
    CHECK(std::adjacent_find(code.indices.begin(), code.indices.end()) == code.indices.end());
    ++cases;
  }
  CHECK(cases == 300);
}

TEST_CASE("OMP on orthonormal dictionaries is the best K-subset") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(7));
    const int K = 1 + static_cast<int>(rng.below(std::min(3, n)));
    const Dictionary D(random_orthonormal(n, rng));
    Eigen::VectorXd s(n);
    for (int i = 0; i < n; ++i) s(i) = rng.normal();
    const auto code = omp_encode(D, std::vector<double>(s.data(), s.data() + n), K);
    // Brute force over all K-subsets.
    std::vector<int> best;
    double best_r = 1e300;
    std::vector<int> mask(static_cast<std::size_t>(n), 0);
    std::fill(mask.begin(), mask.begin() + K, 1);
    std::sort(mask.begin(), mask.end());
    do {
      std::vector<int> idx;
      for (int i = 0; i < n; ++i)
        if (mask[static_cast<std::size_t>(i)]) idx.push_back(i);
      const double r = subset_residual(D.atoms(), s, idx);
      if (r < best_r - 1e-12) {
        best_r = r;
        best = idx;
      }
    } while (std::next_permutation(mask.begin(), mask.end()));
    CHECK(code.indices == best);
  }
}

TEST_CASE("OMP residual is non-increasing and never exceeds the signal norm") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const Dictionary D(random_matrix(12, 20, rng));
    std::vector<double> s(12);
    for (double& v : s) v = rng.normal();
    const auto tr = omp_encode_traced(D, s, 5);
    for (std::size_t i = 1; i < tr.residual_norms.size(); ++i)
      CHECK(tr.residual_norms[i] <= tr.residual_norms[i - 1] + 1e-12);
    const auto rec = reconstruct(D, tr.code);
    double err = 0, norm = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      err += (s[i] - rec[i]) * (s[i] - rec[i]);
      norm += s[i] * s[i];
    }
    CHECK(err <= norm + 1e-12);
  }
}

TEST_CASE("batch coding matches the serial reference") {
  const auto patches = ridge_patches(3);
  std::vector<PatchVector> normalized;
  for (const auto& p : patches) normalized.push_back(normalize_patch(p));
  TrainConfig cfg;
  cfg.epochs = 1;
  const Dictionary D = learn_dictionary(patches, cfg);
  const auto a = encode_batch(D, normalized, 2);
  const auto b = encode_batch_serial(D, normalized, 2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].indices == b[i].indices);
    CHECK(a[i].values == b[i].values);
  }
}

TEST_CASE("l1 coding on an orthonormal dictionary is soft thresholding") {
  Rng rng(21);
  const Dictionary D(random_orthonormal(6, rng));
  Eigen::VectorXd s(6);
  for (int i = 0; i < 6; ++i) s(i) = rng.normal();
  const double lambda = 0.4;
  const auto code = l1_encode(D, std::vector<double>(s.data(), s.data() + 6), lambda);
  std::vector<double> dense(6, 0.0);
  for (std::size_t i = 0; i < code.nnz(); ++i) dense[static_cast<std::size_t>(code.indices[i])] = code.values[i];
  for (int k = 0; k < 6; ++k) {
    const double c = D.atom(k).dot(s);
    const double expect = std::copysign(std::max(std::fabs(c) - lambda / 2, 0.0), c);
    CHECK(dense[static_cast<std::size_t>(k)] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("init_dictionary") {
  Rng rng(2);
  std::vector<PatchVector> patches;
  for (int i = 0; i < 12; ++i) {
    PatchVector p;
    for (int j = 0; j < 9; ++j) p.values.push_back(rng.normal());
    patches.push_back(p);
  }
  SUBCASE("exhaustive sample uses every patch once") {
    const Dictionary D = init_dictionary(patches, 12, 5);
    std::multiset<int> used;
    for (int k = 0; k < 12; ++k) {
      int hit = -1;
      for (int i = 0; i < 12; ++i) {
        const auto n = normalize_patch(patches[static_cast<std::size_t>(i)]);
        const Eigen::Map<const Eigen::VectorXd> v(n.values.data(), 9);
        if ((D.atom(k) - v).norm() < 1e-9) hit = i;
      }
      CHECK(hit >= 0);
      used.insert(hit);
    }
    CHECK(std::set<int>(used.begin(), used.end()).size() == 12);
  }
  SUBCASE("same seed, same dictionary") {
    CHECK(init_dictionary(patches, 6, 3).atoms() == init_dictionary(patches, 6, 3).atoms());
    CHECK(init_dictionary(patches, 6, 3).atoms() != init_dictionary(patches, 6, 4).atoms());
  }
  SUBCASE("flat patches are skipped") {
    auto with_flat = patches;
    for (auto& v : with_flat[0].values) v = 4.0;
    for (auto& v : with_flat[1].values) v = 4.0;
    const Dictionary D = init_dictionary(with_flat, 10, 1);
    for (int k = 0; k < 10; ++k) CHECK(D.atom(k).norm() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("learning rejects insufficient and degenerate data") {
  std::vector<PatchVector> few(5, PatchVector{{1, 2, 3, 4}, {}});
  TrainConfig cfg;
  cfg.atom_count = 10;
  CHECK_THROWS_AS(learn_dictionary(few, cfg), InsufficientDataError);
  std::vector<PatchVector> flat(20, PatchVector{{3, 3, 3, 3}, {}});
  cfg.atom_count = 4;
  cfg.sparsity = 1;
  CHECK_THROWS_AS(learn_dictionary(flat, cfg), DegenerateDataError);
  TrainConfig bad;
  bad.sparsity = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.atom_count = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("single-direction data learns that direction") {
  Rng rng(4);
  PatchVector v;
  for (int i = 0; i < 16; ++i) v.values.push_back(rng.normal());
  v = normalize_patch(v);
  std::vector<PatchVector> patches(30, v);
  TrainConfig cfg;
  cfg.atom_count = 1;
  cfg.sparsity = 1;
  const Dictionary D = learn_dictionary(patches, cfg);
  const Eigen::Map<const Eigen::VectorXd> e(v.values.data(), 16);
  CHECK(std::min((D.atom(0) - e).norm(), (D.atom(0) + e).norm()) < 1e-6);
}

TEST_CASE("two-line data: learned error within 1.5x of the SVD basis") {
  Rng rng(17);
  const int n = 16;
  // Two zero-mean orthogonal directions.
  Eigen::MatrixXd q = random_orthonormal(n, rng);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(n) / std::sqrt(double(n));
  Eigen::VectorXd u = q.col(0) - q.col(0).dot(ones) * ones;
  u.normalize();
  Eigen::VectorXd v = q.col(1) - q.col(1).dot(ones) * ones;
  v -= v.dot(u) * u;
  v.normalize();
  std::vector<PatchVector> patches;
  Eigen::MatrixXd X(n, 400);
  for (int i = 0; i < 400; ++i) {
    const Eigen::VectorXd base = (i % 10 < 7 ? u : v) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    Eigen::VectorXd s = base + 0.05 * Eigen::VectorXd::NullaryExpr(n, [&] { return rng.normal(); });
    PatchVector p;
    p.values.assign(s.data(), s.data() + n);
    p = normalize_patch(p);
    patches.push_back(p);
    X.col(i) = Eigen::Map<const Eigen::VectorXd>(p.values.data(), n);
  }
  // Top-2 singular vectors of X by power iteration with deflation.
  Eigen::MatrixXd G = X * X.transpose();
  std::vector<Eigen::VectorXd> sv;
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd b = Eigen::VectorXd::Ones(n);
    for (int it = 0; it < 500; ++it) {
      for (const auto& w : sv) b -= w.dot(b) * w;
      b = (G * b).normalized();
    }
    sv.push_back(b);
  }
  double svd_err = 0;
  for (int i = 0; i < 400; ++i) {
    const Eigen::VectorXd x = X.col(i);
    double best = 1e300;
    for (const auto& w : sv) best = std::min(best, (x - w.dot(x) * w).squaredNorm());
    svd_err += best;
  }
  svd_err /= 400;

  TrainConfig cfg;
  cfg.atom_count = 2;
  cfg.sparsity = 1;
  cfg.epochs = 5;
  const Dictionary D = learn_dictionary(patches, cfg);
  const double learned = mean_reconstruction_error(D, patches, 1);
  CHECK(learned <= 1.5 * svd_err);
}

TEST_CASE("learned dictionary keeps unit-norm atoms regardless of input scale") {
  auto patches = ridge_patches(2);
  for (auto& p : patches)
    for (double& v : p.values) v *= 1e-3;
  TrainConfig cfg;
  cfg.atom_count = 20;
  cfg.epochs = 2;
  const Dictionary D = learn_dictionary(patches, cfg);
  for (int k = 0; k < D.atom_count(); ++k) CHECK(D.atom(k).norm() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("epoch error history is non-increasing over epoch pairs") {
  const auto patches = ridge_patches(5);
  TrainConfig cfg;
  const LearnTrace tr = learn_dictionary_traced(patches, cfg);
  REQUIRE(tr.error_history.size() == 6);
  for (std::size_t e = 1; e < tr.error_history.size(); ++e)
    CHECK(tr.error_history[e] <= tr.error_history[e - 1] * 1.01);
  for (std::size_t e = 2; e < tr.error_history.size(); ++e) CHECK(tr.error_history[e] <= tr.error_history[e - 2]);
  CHECK(learn_dictionary(patches, cfg).atoms() == tr.dictionary.atoms());
}

TEST_CASE("default operating point runs on a 100-patch set") {
  auto patches = ridge_patches(8);
  patches.resize(100);
  TrainConfig cfg;
  const Dictionary D = learn_dictionary(patches, cfg);
  CHECK(D.atom_count() == 100);
  CHECK(D.atom_dim() == 32 * 32);
}

TEST_CASE("l1 training mode produces a usable dictionary") {
  const auto patches = ridge_patches(6);
  TrainConfig cfg;
  cfg.coding = CodingMode::L1;
  cfg.atom_count = 30;
  cfg.epochs = 2;
  const LearnTrace tr = learn_dictionary_traced(patches, cfg);
  CHECK(tr.error_history.back() < tr.error_history.front());
}

TEST_CASE("dictionary container round trip and validation") {
  Rng rng(3);
  Dictionary D(random_matrix(9, 4, rng), "img");
  D.set_labels({AtomLabel::RidgeValley, AtomLabel::NonRidgeValley, AtomLabel::RidgeValley, AtomLabel::NonRidgeValley});
  const auto bytes = encode_dictionary(D);
  REQUIRE(bytes.size() == 16 + 9 * 4 * 8 + 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 7) == "LMDICT1");
  CHECK(bytes[7] == 0);
  CHECK(bytes[8] == 9);
  CHECK(bytes[12] == 4);
  CHECK(bytes.back() == 0);
  const Dictionary E = decode_dictionary(bytes);
  CHECK(E.atoms() == D.atoms());
  CHECK(E.labels() == D.labels());

  Dictionary U(random_matrix(4, 2, rng));
  const auto ub = encode_dictionary(U);
  CHECK(ub[ub.size() - 1] == 0xFF);
  CHECK_FALSE(decode_dictionary(ub).fully_labeled());

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_dictionary(bad), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_dictionary(truncated), FormatError);

  const auto dir = lfm::testing::scratch_dir("dictlearn_io");
  save_dictionary(D, dir / "d.lmd");
  CHECK(load_dictionary(dir / "d.lmd").atoms() == D.atoms());
  CHECK_THROWS_AS(load_dictionary(dir / "missing.lmd"), NotFoundError);
}

TEST_CASE("dictionary invariants") {
  CHECK_THROWS_AS(Dictionary(Eigen::MatrixXd::Zero(3, 2)), InvalidArgument);
  Rng rng(8);
  Dictionary D(random_matrix(5, 3, rng) * 7.0);
  for (int k = 0; k < 3; ++k) CHECK(D.atom(k).norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS(D.set_labels({AtomLabel::RidgeValley}));
}
