#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "lfm/gamatch.hpp"
#include "lfm/minutiae.hpp"
#include "lfm/segmentation.hpp"

namespace lfm {

struct GalleryEntry {
  std::string id;
  MinutiaSet minutiae;
};

struct Gallery {
  std::vector<GalleryEntry> entries;
  std::filesystem::path source;

  /// Index of `id`, or -1.
  int find(const std::string& id) const;
  /// Throws InvalidArgument on duplicate ids.
  void validate() const;
};

/// Every `<id>.min` in `dir` becomes an entry. Images (`.pgm`, `.png`) without a
/// `.min` sidecar are run through the baseline extractor. Entries are sorted by id.
Gallery load_gallery(const std::filesystem::path& dir, const ExtractorConfig& extractor = {});

struct Candidate {
  std::string id;
  int score = 0;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct CandidateList {
  std::string query_id;
  std::vector<Candidate> ranked;  ///< descending score, ties by ascending id
};

/// GA seed for one gallery entry: derived from the config seed and the entry id.
std::uint64_t entry_seed(std::uint64_t seed, const std::string& id);

/// Matches the latent against every entry; OpenMP-parallel over entries.
CandidateList search(const MinutiaSet& latent, const std::vector<const GalleryEntry*>& subset, const GaConfig& cfg);
CandidateList search_serial(const MinutiaSet& latent, const std::vector<const GalleryEntry*>& subset,
                            const GaConfig& cfg);

/// 1-based rank of `id`; throws NotFoundError when absent.
int rank_of(const CandidateList& list, const std::string& id);
/// rank / |list| * 100.
double penetration_rate(const CandidateList& list, const std::string& mate_id);

struct TrialPlan {
  int subset_size = 50;
  int trials = 10;
  std::uint64_t seed = 1;
  void validate() const;
};

struct LatentQuery {
  std::string id;
  MinutiaSet minutiae;
  std::string mate_id;
  std::string category;  ///< empty when not given
};

/// One (trial, latent) search.
struct TrialCell {
  int trial = 0;
  std::string latent_id;
  std::string mate_id;
  std::string category;
  int rank = 0;
  int list_size = 0;
  double penetration = 0.0;
  int mate_score = 0;
  std::string top_id;
  int top_score = 0;
};

struct RankSample {
  int rank = 0;
  int list_size = 0;
};

struct CmcPoint {
  double penetration = 0.0;  ///< percent
  double rate = 0.0;
};

/// 1, 5, 10, 15, ..., 100.
std::vector<double> default_cmc_checkpoints();

/// Fraction of samples whose rank is within ceil(pr * R / 100) of the top, per checkpoint pr.
std::vector<CmcPoint> cmc(const std::vector<RankSample>& samples,
                          const std::vector<double>& checkpoints = default_cmc_checkpoints());

struct GroupStats {
  int cells = 0;
  double mean_penetration = 0.0;
  double rank1_rate = 0.0;
  std::vector<CmcPoint> cmc;
};

struct IdentificationReport {
  std::vector<TrialCell> cells;
  GroupStats overall;
  std::map<std::string, GroupStats> by_category;
};

GroupStats group_stats(const std::vector<TrialCell>& cells);

/// Per trial and latent: R-1 distinct non-mates drawn without replacement plus the mate.
std::vector<const GalleryEntry*> trial_subset(const Gallery& gallery, const std::string& mate_id, int trial,
                                              const std::string& latent_id, const TrialPlan& plan);

IdentificationReport run_trials(const std::vector<LatentQuery>& latents, const Gallery& gallery, const TrialPlan& plan,
                                const GaConfig& cfg);

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;  ///< resolved against the manifest directory
  std::string mate_id;
  std::string category;
};

/// Lines "latent <id> <path> mate=<gallery-id> [category=good|bad|ugly]"; '#' starts a comment.
std::vector<ManifestEntry> read_manifest(std::istream& in, const std::filesystem::path& base_dir);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

/// A `.min` file is read as is; an image is segmented, extracted and masked by its ROI.
LatentQuery load_latent(const ManifestEntry& entry, const SegmentConfig& seg, const ExtractorConfig& extractor);

/// One CSV row per cell; `header_lines` are written first, each prefixed with "# ".
void write_report_csv(std::ostream& out, const IdentificationReport& report,
                      const std::vector<std::string>& header_lines = {});
void write_summary(std::ostream& out, const IdentificationReport& report);

}  // namespace lfm
