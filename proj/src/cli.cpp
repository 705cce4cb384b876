#include "lfm/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "lfm/atomid.hpp"
#include "lfm/config.hpp"
#include "lfm/dictionary.hpp"
#include "lfm/error.hpp"
#include "lfm/evaluate.hpp"
#include "lfm/gamatch.hpp"
#include "lfm/identify.hpp"
#include "lfm/minutiae.hpp"
#include "lfm/parallel.hpp"
#include "lfm/segmentation.hpp"
#include "lfm/synthgen.hpp"

namespace lfm {

namespace {

namespace fs = std::filesystem;

struct Globals {
  std::string config_path;
  std::vector<std::string> params;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 0;
};

RunConfig effective_config(const Globals& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg.load_file(g.config_path);
  for (const auto& p : g.params) cfg.apply_override(p);
  if (g.seed_given) cfg.seed = g.seed;
  cfg.validate();
  return cfg;
}

std::vector<std::string> header_lines(const RunConfig& cfg) {
  std::vector<std::string> h{std::string("lfm ") + kToolkitVersion};
  for (auto& kv : cfg.echo()) h.push_back(std::move(kv));
  return h;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  return f;
}

/// Writes to `path`, or to `fallback` when the path is empty.
template <typename Fn>
void emit(const std::string& path, std::ostream& fallback, Fn&& fn) {
  if (path.empty()) {
    fn(fallback);
    return;
  }
  auto f = open_out(path);
  fn(f);
  if (!f) throw InputError("write failed for " + path);
}

void require_patch_fits(const GrayImage& img, int patch_size) {
  if (img.width() < patch_size || img.height() < patch_size)
    throw InputError("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                     " is smaller than one " + std::to_string(patch_size) + " px patch");
}

void write_to_file(const fs::path& path, const std::string& text) {
  auto f = open_out(path);
  f << text;
}

struct SegmentArgs {
  std::string image, out, dump_dir;
};

int cmd_segment(const Globals& g, const SegmentArgs& a, std::ostream& out) {
  const RunConfig cfg = effective_config(g);
  const GrayImage img = load_image(a.image);
  require_patch_fits(img, cfg.segment.patch_size);
  const SegmentationResult r = segment_detailed(img, cfg.segment_config());
  save_roi(r.roi, a.out);
  if (!a.dump_dir.empty()) {
    const fs::path d(a.dump_dir);
    fs::create_directories(d);
    save_dictionary(r.dictionary, d / "dictionary.lmd");
    auto f = open_out(d / "atoms.tsv");
    write_atom_report(f, r.atoms);
    save_pgm(vote_map_image(r.votes), d / "votes.pgm");
    save_pgm(mask_image(r.otsu_mask), d / "otsu_mask.pgm");
    save_pgm(mask_image(r.cleaned_mask), d / "mask.pgm");
  }
  out << "roi vertices " << r.roi.vertices.size() << '\n';
  return kExitOk;
}

struct ExtractArgs {
  std::string image, out, roi;
};

int cmd_extract(const Globals& g, const ExtractArgs& a, std::ostream& out) {
  const RunConfig cfg = effective_config(g);
  const GrayImage img = load_image(a.image);
  std::optional<RoiPolygon> roi;
  if (!a.roi.empty()) roi = load_roi(a.roi);
  MinutiaSet m = (roi && roi->empty()) ? MinutiaSet{} : extract_minutiae(img, roi, cfg.extractor);
  m.id = fs::path(a.image).stem().string();
  emit(a.out, out, [&](std::ostream& o) { write_minutiae(o, m); });
  return kExitOk;
}

struct MatchArgs {
  std::string latent, gallery, out, fitness_csv;
};

int cmd_match(const Globals& g, const MatchArgs& a, std::ostream& out) {
  const RunConfig cfg = effective_config(g);
  const MinutiaSet l = load_minutiae(a.latent);
  const MinutiaSet c = load_minutiae(a.gallery);
  if (l.empty() || c.empty()) throw InputError("both minutiae sets must be non-empty");
  const MatchResult r = run_ga(c, l, cfg.ga_config());
  emit(a.out, out, [&](std::ostream& o) {
    for (const auto& h : header_lines(cfg)) o << "# " << h << '\n';
    write_match(o, r);
  });
  if (!a.fitness_csv.empty()) {
    auto f = open_out(a.fitness_csv);
    write_fitness_csv(f, r);
  }
  return kExitOk;
}

struct IdentifyArgs {
  std::string manifest, gallery, out, summary;
};

int cmd_identify(const Globals& g, const IdentifyArgs& a, std::ostream& out) {
  const RunConfig cfg = effective_config(g);
  const auto entries = load_manifest(a.manifest);
  if (entries.empty()) throw InputError("manifest lists no latents");
  const Gallery gallery = load_gallery(a.gallery, cfg.extractor);
  std::vector<LatentQuery> latents;
  for (const auto& e : entries) latents.push_back(load_latent(e, cfg.segment_config(), cfg.extractor));
  const IdentificationReport report = run_trials(latents, gallery, cfg.trial_plan(), cfg.ga_config());
  emit(a.out, out, [&](std::ostream& o) { write_report_csv(o, report, header_lines(cfg)); });
  if (a.summary.empty() && !a.out.empty()) {
    write_summary(out, report);
  } else if (!a.summary.empty()) {
    auto f = open_out(a.summary);
    write_summary(f, report);
  }
  return kExitOk;
}

struct EvalArgs {
  std::vector<std::string> sets;
  std::string batch, out;
};

int cmd_eval_seg(const Globals& g, const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = effective_config(g);
  std::vector<NamedEvalResult> rows;
  auto run_one = [&](const std::string& id, const fs::path& p1, const fs::path& p2, const fs::path& p3) {
    NamedEvalResult r{id, gmpr_fmar(load_minutiae(p1), load_minutiae(p2), load_minutiae(p3), cfg.eval)};
    for (const auto& w : r.result.warnings) err << "warning: " << id << ": " << w << '\n';
    rows.push_back(std::move(r));
  };
  if (!a.batch.empty()) {
    if (!a.sets.empty()) throw InputError("give either three minutiae files or --batch, not both");
    std::ifstream in(a.batch);
    if (!in) throw NotFoundError("cannot open " + a.batch);
    const fs::path base = fs::path(a.batch).parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      std::string id, p1, p2, p3, extra;
      if (!(ls >> id)) continue;
      if (!(ls >> p1 >> p2 >> p3) || (ls >> extra)) throw ParseError("expected 'id truth whole roi'", lineno);
      run_one(id, resolve(p1), resolve(p2), resolve(p3));
    }
  } else {
    if (a.sets.size() != 3) throw InputError("eval-seg needs truth, whole-image and ROI minutiae files");
    run_one(fs::path(a.sets[2]).stem().string(), a.sets[0], a.sets[1], a.sets[2]);
  }
  std::vector<SegEvalResult> results;
  for (const auto& r : rows) results.push_back(r.result);
  const BatchSummary summary = batch_summary(results, cfg.eval_mode);
  emit(a.out, out, [&](std::ostream& o) {
    for (const auto& h : header_lines(cfg)) o << "# " << h << '\n';
    write_eval_csv(o, rows, summary);
  });
  return kExitOk;
}

struct SynthArgs {
  std::string spec, out_dir, stem = "synth";
};

int cmd_synth(const Globals& g, const SynthArgs& a, std::ostream& out) {
  SynthSpec spec = load_synth_spec(a.spec);
  if (g.seed_given) spec.seed = g.seed;
  const SynthResult r = generate(spec);
  save_synth(r, a.out_dir, a.stem);
  out << "wrote " << (fs::path(a.out_dir) / (a.stem + ".pgm")).string() << '\n';
  return kExitOk;
}

struct SynthGalleryArgs {
  std::string out_dir;
  SynthGalleryConfig cfg;
};

int cmd_synth_gallery(const Globals& g, SynthGalleryArgs a, std::ostream& out) {
  if (g.seed_given) a.cfg.seed = g.seed;
  const SynthGallery sg = make_synth_gallery(a.cfg);
  const fs::path root(a.out_dir);
  fs::create_directories(root / "gallery");
  fs::create_directories(root / "latents");
  for (const auto& e : sg.gallery.entries) save_minutiae(e.minutiae, root / "gallery" / (e.id + ".min"));
  std::ostringstream manifest;
  for (const auto& q : sg.latents) {
    save_minutiae(q.minutiae, root / "latents" / (q.id + ".min"));
    manifest << "latent " << q.id << " latents/" << q.id << ".min mate=" << q.mate_id << " category=" << q.category
             << '\n';
  }
  write_to_file(root / "manifest.txt", manifest.str());
  out << "wrote " << sg.gallery.entries.size() << " gallery prints and " << sg.latents.size() << " latents\n";
  return kExitOk;
}

struct LearnArgs {
  std::string image, out, report;
};

int cmd_learn_dict(const Globals& g, const LearnArgs& a, std::ostream& out) {
  const RunConfig cfg = effective_config(g);
  const SegmentConfig seg = cfg.segment_config();
  const GrayImage img = load_image(a.image);
  require_patch_fits(img, seg.patch_size);
  const auto patches = extract_patches(img, seg.patch_size, seg.stride);
  const LearnTrace trace = learn_dictionary_traced(patches, seg.train);
  Dictionary dict = trace.dictionary;
  dict.set_trained_on(fs::path(a.image).filename().string());
  const auto atoms = classify_atoms(dict, seg.atomid);
  dict.set_labels(labels_from(atoms));
  save_dictionary(dict, a.out);
  if (!a.report.empty()) {
    auto f = open_out(a.report);
    write_atom_report(f, atoms);
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "error initial %.6f final %.6f\n", trace.error_history.front(),
                trace.error_history.back());
  out << buf;
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent fingerprint segmentation and minutiae matching toolkit", "lfm"};
  app.require_subcommand(1);
  Globals g;
  bool version = false;
  app.add_option("--config", g.config_path, "key = value configuration file");
  app.add_option("--param", g.params, "override one configuration key (key=value); repeatable");
  auto* seed_opt = app.add_option("--seed", g.seed, "global random seed");
  app.add_option("--threads", g.threads, "worker threads for parallel stages (0 = default)")->check(CLI::NonNegativeNumber);
  app.add_flag("--version", version, "print toolkit and format versions");

  SegmentArgs seg;
  auto* c_seg = app.add_subcommand("segment", "segment the ridge region of a latent image");
  c_seg->add_option("image", seg.image)->required();
  c_seg->add_option("-o,--out", seg.out, "ROI polygon file")->required();
  c_seg->add_option("--dump-dir", seg.dump_dir, "write dictionary, atom report, vote map and masks here");

  ExtractArgs ext;
  auto* c_ext = app.add_subcommand("extract", "baseline minutiae extraction");
  c_ext->add_option("image", ext.image)->required();
  c_ext->add_option("-o,--out", ext.out, "minutiae file (default: stdout)");
  c_ext->add_option("--roi", ext.roi, "restrict to this ROI polygon");

  MatchArgs mat;
  auto* c_mat = app.add_subcommand("match", "align a gallery minutiae set to a latent with the GA");
  c_mat->add_option("latent", mat.latent)->required();
  c_mat->add_option("gallery", mat.gallery)->required();
  c_mat->add_option("-o,--out", mat.out, "result file (default: stdout)");
  c_mat->add_option("--fitness-csv", mat.fitness_csv, "per-generation best fitness");

  IdentifyArgs idf;
  auto* c_idf = app.add_subcommand("identify", "run the gallery identification protocol");
  c_idf->add_option("manifest", idf.manifest)->required();
  c_idf->add_option("gallery", idf.gallery, "gallery directory")->required();
  c_idf->add_option("-o,--out", idf.out, "per-cell CSV report (default: stdout)");
  c_idf->add_option("--summary", idf.summary, "summary file (default: stdout when --out is given)");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval-seg", "GMPR, FMAR and AUC of ROI-restricted extraction");
  c_ev->add_option("sets", ev.sets, "truth, whole-image and ROI minutiae files");
  c_ev->add_option("--batch", ev.batch, "file with lines 'id truth whole roi'");
  c_ev->add_option("-o,--out", ev.out, "CSV output (default: stdout)");

  SynthArgs syn;
  auto* c_syn = app.add_subcommand("synth", "render a synthetic latent from a spec file");
  c_syn->add_option("spec", syn.spec)->required();
  c_syn->add_option("out_dir", syn.out_dir)->required();
  c_syn->add_option("--stem", syn.stem, "output file stem");

  SynthGalleryArgs sga;
  auto* c_sga = app.add_subcommand("synth-gallery", "write a planted minutiae gallery, latents and manifest");
  c_sga->add_option("out_dir", sga.out_dir)->required();
  c_sga->add_option("--size", sga.cfg.gallery_size, "gallery prints");
  c_sga->add_option("--latents", sga.cfg.latents, "latents (planted transforms of the first prints)");
  c_sga->add_option("--points", sga.cfg.points, "minutiae per print");

  LearnArgs lrn;
  auto* c_lrn = app.add_subcommand("learn-dict", "learn and label a dictionary from one image");
  c_lrn->add_option("image", lrn.image)->required();
  c_lrn->add_option("-o,--out", lrn.out, "dictionary container")->required();
  c_lrn->add_option("--report", lrn.report, "atom report TSV");

  // --version works without a subcommand.
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--version") {
      out << "lfm " << kToolkitVersion << " (dictionary LMDICT1, roi 1, minutiae 1)\n";
      return kExitOk;
    }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    if (g.threads > 0) set_thread_count(g.threads);
    if (*c_seg) return cmd_segment(g, seg, out);
    if (*c_ext) return cmd_extract(g, ext, out);
    if (*c_mat) return cmd_match(g, mat, out);
    if (*c_idf) return cmd_identify(g, idf, out);
    if (*c_ev) return cmd_eval_seg(g, ev, out, err);
    if (*c_syn) return cmd_synth(g, syn, out);
    if (*c_sga) return cmd_synth_gallery(g, sga, out);
    if (*c_lrn) return cmd_learn_dict(g, lrn, out);
    err << "no subcommand\n";
    return kExitUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const InsufficientDataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const DegenerateDataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace lfm
