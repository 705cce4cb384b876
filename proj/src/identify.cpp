#include "lfm/identify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "lfm/error.hpp"
#include "lfm/rng.hpp"

namespace lfm {

int Gallery::find(const std::string& id) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].id == id) return static_cast<int>(i);
  return -1;
}

void Gallery::validate() const {
  std::set<std::string> ids;
  for (const auto& e : entries)
    if (!ids.insert(e.id).second) throw InvalidArgument("duplicate gallery id '" + e.id + "'");
}

Gallery load_gallery(const std::filesystem::path& dir, const ExtractorConfig& extractor) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw NotFoundError("gallery directory not found: " + dir.string());
  std::map<std::string, fs::path> mins, images;
  for (const auto& de : fs::directory_iterator(dir)) {
    if (!de.is_regular_file()) continue;
    const auto ext = de.path().extension().string();
    const auto stem = de.path().stem().string();
    if (ext == ".min") mins[stem] = de.path();
    else if (ext == ".pgm" || ext == ".png") images.emplace(stem, de.path());
  }
  Gallery g;
  g.source = dir;
  for (const auto& [id, path] : mins) {
    GalleryEntry e{id, load_minutiae(path)};
    e.minutiae.id = id;
    g.entries.push_back(std::move(e));
  }
  for (const auto& [id, path] : images) {
    if (mins.count(id)) continue;
    GalleryEntry e{id, extract_minutiae(load_image(path), std::nullopt, extractor)};
    e.minutiae.id = id;
    g.entries.push_back(std::move(e));
  }
  std::sort(g.entries.begin(), g.entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return g;
}

std::uint64_t entry_seed(std::uint64_t seed, const std::string& id) { return mix_seed(seed, hash_id(id)); }

namespace {

int match_score(const MinutiaSet& latent, const GalleryEntry& entry, const GaConfig& cfg, bool serial = false) {
  if (latent.empty() || entry.minutiae.empty()) return 0;
  GaConfig c = cfg;
  c.seed = entry_seed(cfg.seed, entry.id);
  // Gallery print is C, the latent is L.
  return (serial ? run_ga_serial(entry.minutiae, latent, c) : run_ga(entry.minutiae, latent, c)).score;
}

CandidateList finish(const MinutiaSet& latent, const std::vector<const GalleryEntry*>& subset,
                     const std::vector<int>& scores) {
  CandidateList list;
  list.query_id = latent.id;
  for (std::size_t i = 0; i < subset.size(); ++i) list.ranked.push_back({subset[i]->id, scores[i]});
  std::sort(list.ranked.begin(), list.ranked.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return list;
}

}  // namespace

CandidateList search(const MinutiaSet& latent, const std::vector<const GalleryEntry*>& subset, const GaConfig& cfg) {
  if (subset.empty()) throw InvalidArgument("search needs a non-empty gallery subset");
  cfg.validate();
  std::vector<int> scores(subset.size());
  std::exception_ptr failure;
  const long n = static_cast<long>(subset.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      scores[static_cast<std::size_t>(i)] = match_score(latent, *subset[static_cast<std::size_t>(i)], cfg);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return finish(latent, subset, scores);
}

CandidateList search_serial(const MinutiaSet& latent, const std::vector<const GalleryEntry*>& subset,
                            const GaConfig& cfg) {
  if (subset.empty()) throw InvalidArgument("search needs a non-empty gallery subset");
  cfg.validate();
  std::vector<int> scores(subset.size());
  for (std::size_t i = 0; i < subset.size(); ++i) scores[i] = match_score(latent, *subset[i], cfg, true);
  return finish(latent, subset, scores);
}

int rank_of(const CandidateList& list, const std::string& id) {
  for (std::size_t i = 0; i < list.ranked.size(); ++i)
    if (list.ranked[i].id == id) return static_cast<int>(i) + 1;
  throw NotFoundError("'" + id + "' is not in the candidate list");
}

double penetration_rate(const CandidateList& list, const std::string& mate_id) {
  return 100.0 * rank_of(list, mate_id) / static_cast<double>(list.ranked.size());
}

void TrialPlan::validate() const {
  if (subset_size < 2) throw ConfigError("subset_size must be >= 2");
  if (trials < 1) throw ConfigError("trials must be >= 1");
}

std::vector<double> default_cmc_checkpoints() {
  std::vector<double> c{1.0};
  for (int p = 5; p <= 100; p += 5) c.push_back(p);
  return c;
}

std::vector<CmcPoint> cmc(const std::vector<RankSample>& samples, const std::vector<double>& checkpoints) {
  std::vector<CmcPoint> curve;
  for (double pr : checkpoints) {
    int hit = 0;
    for (const auto& s : samples) {
      const double depth = std::ceil(pr * s.list_size / 100.0 - 1e-9);
      if (s.rank <= depth) ++hit;
    }
    curve.push_back({pr, samples.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(samples.size())});
  }
  return curve;
}

GroupStats group_stats(const std::vector<TrialCell>& cells) {
  GroupStats g;
  g.cells = static_cast<int>(cells.size());
  std::vector<RankSample> samples;
  double pr = 0;
  int rank1 = 0;
  for (const auto& c : cells) {
    samples.push_back({c.rank, c.list_size});
    pr += c.penetration;
    rank1 += c.rank == 1;
  }
  if (!cells.empty()) {
    g.mean_penetration = pr / static_cast<double>(cells.size());
    g.rank1_rate = static_cast<double>(rank1) / static_cast<double>(cells.size());
  }
  g.cmc = cmc(samples);
  return g;
}

std::vector<const GalleryEntry*> trial_subset(const Gallery& gallery, const std::string& mate_id, int trial,
                                              const std::string& latent_id, const TrialPlan& plan) {
  const int mate = gallery.find(mate_id);
  if (mate < 0) throw ConfigError("mate '" + mate_id + "' of latent '" + latent_id + "' is not in the gallery");
  if (plan.subset_size > static_cast<int>(gallery.entries.size()))
    throw ConfigError("subset_size exceeds the gallery size");
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < gallery.entries.size(); ++i)
    if (static_cast<int>(i) != mate) others.push_back(i);
  Rng rng(mix_seed(mix_seed(plan.seed, static_cast<std::uint64_t>(trial)), hash_id(latent_id)));
  const std::size_t need = static_cast<std::size_t>(plan.subset_size - 1);
  for (std::size_t k = 0; k < need; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.below(others.size() - k));
    std::swap(others[k], others[j]);
  }
  std::vector<const GalleryEntry*> subset;
  subset.push_back(&gallery.entries[static_cast<std::size_t>(mate)]);
  for (std::size_t k = 0; k < need; ++k) subset.push_back(&gallery.entries[others[k]]);
  return subset;
}

IdentificationReport run_trials(const std::vector<LatentQuery>& latents, const Gallery& gallery, const TrialPlan& plan,
                                const GaConfig& cfg) {
  plan.validate();
  cfg.validate();
  gallery.validate();
  for (const auto& q : latents)
    if (gallery.find(q.mate_id) < 0)
      throw ConfigError("mate '" + q.mate_id + "' of latent '" + q.id + "' is not in the gallery");

  IdentificationReport report;
  for (int t = 0; t < plan.trials; ++t)
    for (const auto& q : latents) {
      const auto subset = trial_subset(gallery, q.mate_id, t, q.id, plan);
      GaConfig c = cfg;
      c.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(t));
      MinutiaSet latent = q.minutiae;
      latent.id = q.id;
      const CandidateList list = search(latent, subset, c);
      TrialCell cell;
      cell.trial = t;
      cell.latent_id = q.id;
      cell.mate_id = q.mate_id;
      cell.category = q.category;
      cell.rank = rank_of(list, q.mate_id);
      cell.list_size = static_cast<int>(list.ranked.size());
      cell.penetration = penetration_rate(list, q.mate_id);
      cell.mate_score = list.ranked[static_cast<std::size_t>(cell.rank - 1)].score;
      cell.top_id = list.ranked.front().id;
      cell.top_score = list.ranked.front().score;
      report.cells.push_back(std::move(cell));
    }
  report.overall = group_stats(report.cells);
  std::map<std::string, std::vector<TrialCell>> groups;
  for (const auto& c : report.cells)
    if (!c.category.empty()) groups[c.category].push_back(c);
  for (const auto& [name, cells] : groups) report.by_category[name] = group_stats(cells);
  return report;
}

std::vector<ManifestEntry> read_manifest(std::istream& in, const std::filesystem::path& base_dir) {
  std::vector<ManifestEntry> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    if (kw != "latent") throw ParseError("expected 'latent'", lineno);
    ManifestEntry e;
    std::string path;
    if (!(ls >> e.id >> path)) throw ParseError("expected 'latent <id> <path> mate=<id>'", lineno);
    std::string opt;
    while (ls >> opt) {
      if (opt.rfind("mate=", 0) == 0) {
        e.mate_id = opt.substr(5);
      } else if (opt.rfind("category=", 0) == 0) {
        e.category = opt.substr(9);
        if (e.category != "good" && e.category != "bad" && e.category != "ugly")
          throw ParseError("category must be good, bad or ugly", lineno);
      } else {
        throw ParseError("unknown field '" + opt + "'", lineno);
      }
    }
    if (e.mate_id.empty()) throw ParseError("missing mate=<id>", lineno);
    if (!ids.insert(e.id).second) throw ParseError("duplicate latent id '" + e.id + "'", lineno);
    const std::filesystem::path p(path);
    e.path = p.is_absolute() ? p : base_dir / p;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  return read_manifest(in, path.parent_path());
}

LatentQuery load_latent(const ManifestEntry& entry, const SegmentConfig& seg, const ExtractorConfig& extractor) {
  LatentQuery q;
  q.id = entry.id;
  q.mate_id = entry.mate_id;
  q.category = entry.category;
  if (entry.path.extension() == ".min") {
    q.minutiae = load_minutiae(entry.path);
  } else {
    const GrayImage img = load_image(entry.path);
    const RoiPolygon roi = segment(img, seg);
    q.minutiae = roi.empty() ? MinutiaSet{} : extract_minutiae(img, roi, extractor);
  }
  q.minutiae.id = entry.id;
  return q;
}

void write_report_csv(std::ostream& out, const IdentificationReport& report,
                      const std::vector<std::string>& header_lines) {
  for (const auto& h : header_lines) out << "# " << h << '\n';
  out << "trial,latent,mate,category,rank,list_size,penetration_rate,mate_score,top_id,top_score\n";
  char buf[32];
  for (const auto& c : report.cells) {
    std::snprintf(buf, sizeof buf, "%.4f", c.penetration);
    out << c.trial << ',' << c.latent_id << ',' << c.mate_id << ',' << c.category << ',' << c.rank << ','
        << c.list_size << ',' << buf << ',' << c.mate_score << ',' << c.top_id << ',' << c.top_score << '\n';
  }
}

namespace {

void write_group(std::ostream& out, const std::string& name, const GroupStats& g) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s cells=%d mean_penetration=%.4f rank1=%.4f\n", name.c_str(), g.cells,
                g.mean_penetration, g.rank1_rate);
  out << buf;
  out << name << " cmc";
  for (const auto& p : g.cmc) {
    std::snprintf(buf, sizeof buf, " %g:%.4f", p.penetration, p.rate);
    out << buf;
  }
  out << '\n';
}

}  // namespace

void write_summary(std::ostream& out, const IdentificationReport& report) {
  write_group(out, "overall", report.overall);
  for (const auto& [name, g] : report.by_category) write_group(out, name, g);
}

}  // namespace lfm
