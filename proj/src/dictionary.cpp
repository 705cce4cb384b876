#include "lfm/dictionary.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "lfm/error.hpp"
#include "lfm/rng.hpp"

namespace lfm {

namespace {

constexpr double kResidualStop = 1e-10;
constexpr double kTinyWeight = 1e-12;

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}

SparseCode make_code(std::vector<std::pair<int, double>> entries, int dim) {
  std::sort(entries.begin(), entries.end());
  SparseCode code;
  code.dim = dim;
  for (const auto& [i, v] : entries) {
    code.indices.push_back(i);
    code.values.push_back(v);
  }
  return code;
}

}  // namespace

Dictionary::Dictionary(Eigen::MatrixXd atoms, std::string trained_on)
    : atoms_(std::move(atoms)), trained_on_(std::move(trained_on)) {
  if (atoms_.rows() < 1 || atoms_.cols() < 1) throw InvalidArgument("dictionary needs Ns >= 1 and Na >= 1");
  for (Eigen::Index k = 0; k < atoms_.cols(); ++k) {
    const double n = atoms_.col(k).norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("dictionary atom " + std::to_string(k) + " has zero norm");
    atoms_.col(k) /= n;
  }
  labels_.assign(static_cast<std::size_t>(atoms_.cols()), AtomLabel::Unlabeled);
}

Eigen::VectorXd Dictionary::atom(int k) const {
  if (k < 0 || k >= atom_count()) throw InvalidArgument("atom index out of range");
  return atoms_.col(k);
}

void Dictionary::set_atom(int k, const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (k < 0 || k >= atom_count()) throw InvalidArgument("atom index out of range");
  if (v.size() != atoms_.rows()) throw InvalidArgument("atom dimension mismatch");
  const double n = v.norm();
  if (!(n > 0.0)) throw InvalidArgument("cannot set a zero atom");
  atoms_.col(k) = v / n;
}

void Dictionary::set_labels(std::vector<AtomLabel> labels) {
  if (labels.size() != static_cast<std::size_t>(atom_count())) throw InvalidArgument("label count must equal Na");
  labels_ = std::move(labels);
}

bool Dictionary::fully_labeled() const {
  return !labels_.empty() &&
         std::none_of(labels_.begin(), labels_.end(), [](AtomLabel l) { return l == AtomLabel::Unlabeled; });
}

int SparseCode::dominant_atom() const {
  int best = -1;
  double best_mag = 0.0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const double m = std::abs(values[i]);
    if (m > best_mag) {
      best_mag = m;
      best = indices[i];
    }
  }
  return best;
}

void TrainConfig::validate() const {
  if (sparsity < 1) throw ConfigError("sparsity K must be >= 1");
  if (atom_count < sparsity) throw ConfigError("atom count must be >= sparsity K");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
  if (forgetting < 0.0) throw ConfigError("forgetting exponent must be >= 0");
}

namespace {

OmpTrace omp_core(const Eigen::MatrixXd& D, std::span<const double> signal, int sparsity) {
  const auto s = as_vector(signal);
  const int na = static_cast<int>(D.cols());
  OmpTrace trace;
  trace.code.dim = na;

  Eigen::VectorXd residual = s;
  trace.residual_norms.push_back(residual.norm());
  if (trace.residual_norms.back() < kResidualStop) return trace;

  std::vector<char> used(static_cast<std::size_t>(na), 0);
  Eigen::VectorXd coef;
  Eigen::MatrixXd selected(D.rows(), 0);
  for (int it = 0; it < sparsity; ++it) {
    const Eigen::VectorXd corr = D.transpose() * residual;
    int best = -1;
    double best_mag = 0.0;
    for (int k = 0; k < na; ++k) {
      if (used[static_cast<std::size_t>(k)]) continue;
      const double m = std::abs(corr[k]);
      if (m > best_mag) {
        best_mag = m;
        best = k;
      }
    }
    if (best < 0 || best_mag <= 1e-14 * trace.residual_norms.front()) break;
    used[static_cast<std::size_t>(best)] = 1;
    trace.selection_order.push_back(best);
    selected.conservativeResize(Eigen::NoChange, selected.cols() + 1);
    selected.col(selected.cols() - 1) = D.col(best);
    coef = selected.colPivHouseholderQr().solve(s);
    residual = s - selected * coef;
    trace.residual_norms.push_back(residual.norm());
    if (trace.residual_norms.back() < kResidualStop) break;
  }

  std::vector<std::pair<int, double>> entries;
  for (std::size_t i = 0; i < trace.selection_order.size(); ++i)
    entries.emplace_back(trace.selection_order[i], coef[static_cast<Eigen::Index>(i)]);
  trace.code = make_code(std::move(entries), na);
  return trace;
}

SparseCode l1_core(const Eigen::MatrixXd& D, std::span<const double> signal, double lambda, int max_sweeps,
                   double tol) {
  const auto s = as_vector(signal);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(D.cols());
  Eigen::VectorXd residual = s;
  const double half = 0.5 * lambda;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < D.cols(); ++j) {
      const double rho = D.col(j).dot(residual) + g[j];
      const double next = rho > half ? rho - half : (rho < -half ? rho + half : 0.0);
      const double delta = next - g[j];
      if (delta != 0.0) {
        residual -= delta * D.col(j);
        g[j] = next;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    if (max_delta < tol) break;
  }
  std::vector<std::pair<int, double>> entries;
  for (Eigen::Index j = 0; j < g.size(); ++j)
    if (g[j] != 0.0) entries.emplace_back(static_cast<int>(j), g[j]);
  return make_code(std::move(entries), static_cast<int>(D.cols()));
}

}  // namespace

OmpTrace omp_encode_traced(const Dictionary& dict, std::span<const double> signal, int sparsity) {
  if (static_cast<int>(signal.size()) != dict.atom_dim())
    throw InvalidArgument("signal dimension " + std::to_string(signal.size()) + " does not match atom dimension " +
                          std::to_string(dict.atom_dim()));
  if (sparsity < 1 || sparsity > dict.atom_count()) throw InvalidArgument("sparsity must be in [1, Na]");
  return omp_core(dict.atoms(), signal, sparsity);
}

SparseCode omp_encode(const Dictionary& dict, std::span<const double> signal, int sparsity) {
  return omp_encode_traced(dict, signal, sparsity).code;
}

SparseCode l1_encode(const Dictionary& dict, std::span<const double> signal, double lambda, int max_sweeps,
                     double tol) {
  if (static_cast<int>(signal.size()) != dict.atom_dim()) throw InvalidArgument("signal dimension mismatch");
  if (!(lambda > 0.0)) throw InvalidArgument("lambda must be > 0");
  return l1_core(dict.atoms(), signal, lambda, max_sweeps, tol);
}

std::vector<double> reconstruct(const Dictionary& dict, const SparseCode& code) {
  if (code.dim != dict.atom_count()) throw InvalidArgument("code dimension does not match Na");
  if (code.indices.size() != code.values.size()) throw InvalidArgument("code indices/values length mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dict.atom_dim());
  for (std::size_t i = 0; i < code.indices.size(); ++i) {
    const int k = code.indices[i];
    if (k < 0 || k >= dict.atom_count()) throw InvalidArgument("code index out of range");
    out += code.values[i] * dict.atoms().col(k);
  }
  return {out.data(), out.data() + out.size()};
}

std::vector<SparseCode> encode_batch_serial(const Dictionary& dict, std::span<const PatchVector> patches,
                                            int sparsity) {
  std::vector<SparseCode> out;
  out.reserve(patches.size());
  for (const auto& p : patches) out.push_back(omp_encode(dict, p.values, sparsity));
  return out;
}

std::vector<SparseCode> encode_batch(const Dictionary& dict, std::span<const PatchVector> patches, int sparsity) {
  std::vector<SparseCode> out(patches.size());
  const auto n = static_cast<std::ptrdiff_t>(patches.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = omp_encode(dict, patches[static_cast<std::size_t>(i)].values, sparsity);
  return out;
}

double mean_reconstruction_error(const Dictionary& dict, std::span<const PatchVector> normalized, int sparsity) {
  if (normalized.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : normalized) {
    const OmpTrace t = omp_encode_traced(dict, p.values, sparsity);
    const double r = t.residual_norms.back();
    total += r * r;
  }
  return total / static_cast<double>(normalized.size());
}

Dictionary init_dictionary(std::span<const PatchVector> patches, int atom_count, std::uint64_t seed) {
  if (atom_count < 1) throw InvalidArgument("atom count must be >= 1");
  if (patches.size() < static_cast<std::size_t>(atom_count))
    throw InsufficientDataError("need at least " + std::to_string(atom_count) + " patches, got " +
                                std::to_string(patches.size()));
  const std::size_t dim = patches.front().values.size();
  if (dim == 0) throw InvalidArgument("patches must be non-empty");

  std::vector<std::size_t> order(patches.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  Eigen::MatrixXd atoms(static_cast<Eigen::Index>(dim), atom_count);
  int filled = 0;
  for (std::size_t idx : order) {
    if (filled == atom_count) break;
    if (patches[idx].values.size() != dim) throw InvalidArgument("patches have inconsistent dimension");
    PatchVector p = normalize_patch(patches[idx]);
    const auto v = as_vector(p.values);
    if (v.squaredNorm() == 0.0) continue;
    atoms.col(filled++) = v;
  }
  if (filled == 0) throw DegenerateDataError("training set has zero variance");
  if (filled < atom_count)
    throw InsufficientDataError("only " + std::to_string(filled) + " non-constant patches for " +
                                std::to_string(atom_count) + " atoms");
  return Dictionary(std::move(atoms));
}

LearnTrace learn_dictionary_traced(std::span<const PatchVector> patches, const TrainConfig& cfg) {
  cfg.validate();
  if (patches.size() < static_cast<std::size_t>(cfg.atom_count))
    throw InsufficientDataError("need at least " + std::to_string(cfg.atom_count) + " patches, got " +
                                std::to_string(patches.size()));

  std::vector<PatchVector> samples;
  samples.reserve(patches.size());
  for (const auto& p : patches) {
    PatchVector n = normalize_patch(p);
    if (std::any_of(n.values.begin(), n.values.end(), [](double v) { return v != 0.0; }))
      samples.push_back(std::move(n));
  }
  if (samples.empty()) throw DegenerateDataError("training set has zero variance");

  LearnTrace trace;
  Dictionary dict = init_dictionary(patches, cfg.atom_count, cfg.seed);
  const int na = dict.atom_count();
  const Eigen::Index ns = dict.atom_dim();
  if (cfg.sparsity > na) throw ConfigError("sparsity exceeds atom count");

  Eigen::MatrixXd D = dict.atoms();
  // Past statistics: A = sum w_t g g^T, B = sum w_t s g^T. Only ratios of A and B
  // enter the atom update, so the decay (1 - 1/t)^rho is folded into growing
  // weights w_t = t^rho instead of rescaling both matrices each step.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(na, na);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(ns, na);

  auto update_atom = [&](int j) {
    const double ajj = A(j, j);
    if (ajj < kTinyWeight) return;
    Eigen::VectorXd u = D.col(j) + (B.col(j) - D * A.col(j)) / ajj;
    const double n = u.norm();
    if (n > kTinyWeight) D.col(j) = u / n;
  };

  trace.error_history.push_back(mean_reconstruction_error(dict, samples, cfg.sparsity));

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> sample_error(samples.size(), 0.0);
  double t = 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1));
    rng.shuffle(order);
    std::vector<int> usage(static_cast<std::size_t>(na), 0);

    for (std::size_t idx : order) {
      const PatchVector& s = samples[idx];
      const SparseCode code = cfg.coding == CodingMode::Omp ? omp_core(D, s.values, cfg.sparsity).code
                                                            : l1_core(D, s.values, cfg.lambda, 500, 1e-10);
      t += 1.0;
      const auto sv = as_vector(s.values);
      Eigen::VectorXd approx = Eigen::VectorXd::Zero(ns);
      for (std::size_t a = 0; a < code.nnz(); ++a) approx += code.values[a] * D.col(code.indices[a]);
      sample_error[idx] = (sv - approx).squaredNorm();
      if (code.nnz() == 0) continue;

      const double w = std::pow(t, cfg.forgetting);
      for (std::size_t a = 0; a < code.nnz(); ++a) {
        const int ja = code.indices[a];
        ++usage[static_cast<std::size_t>(ja)];
        B.col(ja) += w * code.values[a] * sv;
        for (std::size_t b = 0; b < code.nnz(); ++b) A(ja, code.indices[b]) += w * code.values[a] * code.values[b];
      }
      for (int j : code.indices) update_atom(j);
    }

    for (int j = 0; j < na; ++j) update_atom(j);

    // Re-seed atoms nobody used this epoch with the worst-reconstructed samples.
    std::vector<std::size_t> worst(samples.size());
    std::iota(worst.begin(), worst.end(), std::size_t{0});
    std::stable_sort(worst.begin(), worst.end(),
                     [&](std::size_t a, std::size_t b) { return sample_error[a] > sample_error[b]; });
    std::size_t next_worst = 0;
    for (int j = 0; j < na; ++j) {
      if (usage[static_cast<std::size_t>(j)] != 0 || next_worst >= worst.size()) continue;
      D.col(j) = as_vector(samples[worst[next_worst++]].values);
      A.row(j).setZero();
      A.col(j).setZero();
      B.col(j).setZero();
      ++trace.replaced_atoms;
    }

    dict = Dictionary(D);
    trace.error_history.push_back(mean_reconstruction_error(dict, samples, cfg.sparsity));
  }

  trace.dictionary = std::move(dict);
  return trace;
}

Dictionary learn_dictionary(std::span<const PatchVector> patches, const TrainConfig& cfg) {
  return learn_dictionary_traced(patches, cfg).dictionary;
}

namespace {

constexpr char kMagic[8] = {'L', 'M', 'D', 'I', 'C', 'T', '1', '\0'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> b, std::size_t at, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_dictionary(const Dictionary& dict) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(dict.atom_dim()));
  put_u32(out, static_cast<std::uint32_t>(dict.atom_count()));
  const Eigen::MatrixXd& D = dict.atoms();
  for (Eigen::Index k = 0; k < D.cols(); ++k)
    for (Eigen::Index r = 0; r < D.rows(); ++r) put_f64(out, D(r, k));
  for (AtomLabel l : dict.labels()) out.push_back(static_cast<std::uint8_t>(l));
  return out;
}

Dictionary decode_dictionary(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin(),
                                       [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; }))
    throw FormatError("dictionary: bad magic");
  const auto ns = static_cast<std::size_t>(get_le(bytes, 8, 4));
  const auto na = static_cast<std::size_t>(get_le(bytes, 12, 4));
  if (ns == 0 || na == 0) throw FormatError("dictionary: zero dimension");
  const std::size_t expected = 16 + ns * na * 8 + na;
  if (bytes.size() != expected)
    throw FormatError("dictionary: expected " + std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
  Eigen::MatrixXd D(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(na));
  std::size_t at = 16;
  for (std::size_t k = 0; k < na; ++k)
    for (std::size_t r = 0; r < ns; ++r, at += 8)
      D(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = std::bit_cast<double>(get_le(bytes, at, 8));
  std::vector<AtomLabel> labels;
  for (std::size_t k = 0; k < na; ++k) {
    const std::uint8_t b = bytes[at + k];
    if (b != 0 && b != 1 && b != 0xFF) throw FormatError("dictionary: invalid atom label byte");
    labels.push_back(static_cast<AtomLabel>(b));
  }
  Dictionary dict(std::move(D));
  dict.set_labels(std::move(labels));
  return dict;
}

void save_dictionary(const Dictionary& dict, const std::filesystem::path& path) {
  const auto bytes = encode_dictionary(dict);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for " + path.string());
}

Dictionary load_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_dictionary(bytes);
}

}  // namespace lfm
