#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lfm/image.hpp"

namespace lfm {

enum class AtomLabel : std::uint8_t { NonRidgeValley = 0, RidgeValley = 1, Unlabeled = 0xFF };

/// Ns x Na matrix of unit-norm atoms (one per column) plus per-atom labels.
class Dictionary {
 public:
  Dictionary() = default;
  /// Columns are renormalized to unit length; a zero column is rejected.
  explicit Dictionary(Eigen::MatrixXd atoms, std::string trained_on = {});

  int atom_dim() const noexcept { return static_cast<int>(atoms_.rows()); }
  int atom_count() const noexcept { return static_cast<int>(atoms_.cols()); }
  const Eigen::MatrixXd& atoms() const noexcept { return atoms_; }
  Eigen::VectorXd atom(int k) const;

  /// Overwrites atom k with `v / |v|`.
  void set_atom(int k, const Eigen::Ref<const Eigen::VectorXd>& v);

  const std::vector<AtomLabel>& labels() const noexcept { return labels_; }
  void set_labels(std::vector<AtomLabel> labels);
  bool fully_labeled() const;
  bool is_ridge_valley(int k) const { return labels_.at(static_cast<std::size_t>(k)) == AtomLabel::RidgeValley; }

  const std::string& trained_on() const noexcept { return trained_on_; }
  void set_trained_on(std::string id) { trained_on_ = std::move(id); }

 private:
  Eigen::MatrixXd atoms_;
  std::vector<AtomLabel> labels_;
  std::string trained_on_;
};

/// K-sparse coefficient vector; indices strictly increasing.
struct SparseCode {
  std::vector<int> indices;
  std::vector<double> values;
  int dim = 0;

  std::size_t nnz() const noexcept { return indices.size(); }
  /// Index of the coefficient with the largest magnitude, or -1 for an empty code.
  int dominant_atom() const;
};

enum class CodingMode { Omp, L1 };

struct TrainConfig {
  int atom_count = 100;
  int sparsity = 2;
  int epochs = 5;
  /// Weight of the l1 penalty; used only by CodingMode::L1.
  double lambda = 0.1;
  std::uint64_t seed = 1;
  CodingMode coding = CodingMode::Omp;
  /// Exponent rho of the past-statistics decay (1 - 1/t)^rho; 0 keeps full history.
  double forgetting = 1.0;

  void validate() const;
};

Dictionary init_dictionary(std::span<const PatchVector> patches, int atom_count, std::uint64_t seed);

struct LearnTrace {
  Dictionary dictionary;
  /// Mean squared reconstruction error over the normalized training set:
  /// entry 0 for the initial dictionary, entry e after epoch e.
  std::vector<double> error_history;
  std::size_t replaced_atoms = 0;
};

/// Online dictionary learning, one sample per update. Patches are
/// normalized (zero mean, unit norm) internally.
Dictionary learn_dictionary(std::span<const PatchVector> patches, const TrainConfig& cfg);
LearnTrace learn_dictionary_traced(std::span<const PatchVector> patches, const TrainConfig& cfg);

struct OmpTrace {
  SparseCode code;
  /// Residual l2 norm before the first selection and after each iteration.
  std::vector<double> residual_norms;
  /// Atoms in selection order.
  std::vector<int> selection_order;
};

SparseCode omp_encode(const Dictionary& dict, std::span<const double> signal, int sparsity);
inline SparseCode omp_encode(const Dictionary& dict, const PatchVector& s, int sparsity) {
  return omp_encode(dict, s.values, sparsity);
}
OmpTrace omp_encode_traced(const Dictionary& dict, std::span<const double> signal, int sparsity);

/// Coordinate-descent solution of min |s - D g|^2 + lambda |g|_1.
SparseCode l1_encode(const Dictionary& dict, std::span<const double> signal, double lambda, int max_sweeps = 500,
                     double tol = 1e-10);

/// Codes every patch (already normalized) with OMP. OpenMP-parallel over patches.
std::vector<SparseCode> encode_batch(const Dictionary& dict, std::span<const PatchVector> patches, int sparsity);
/// Serial reference for encode_batch.
std::vector<SparseCode> encode_batch_serial(const Dictionary& dict, std::span<const PatchVector> patches,
                                            int sparsity);

std::vector<double> reconstruct(const Dictionary& dict, const SparseCode& code);

/// Mean of |s - D g|^2 over the normalized patches with K-sparse OMP codes.
double mean_reconstruction_error(const Dictionary& dict, std::span<const PatchVector> normalized, int sparsity);

/// Binary container: "LMDICT1\0", u32 Ns, u32 Na, Ns*Na f64 column-major, Na label bytes (little-endian).
void save_dictionary(const Dictionary& dict, const std::filesystem::path& path);
Dictionary load_dictionary(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dictionary(const Dictionary& dict);
Dictionary decode_dictionary(std::span<const std::uint8_t> bytes);

}  // namespace lfm
