#include <doctest.h>

#include <cstdio>
#include <sstream>

#include <sys/wait.h>

#include "lfm/cli.hpp"
#include "lfm/minutiae.hpp"
#include "lfm/segmentation.hpp"
#include "lfm/synthgen.hpp"
#include "test_support.hpp"

using namespace lfm;
using lfm::testing::scratch_dir;
using lfm::testing::slurp;
using lfm::testing::write_text;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "lfm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string shell_quote(const std::string& s) { return "'" + s + "'"; }

std::string strip_comments(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind("#", 0) != 0) out += line + '\n';
  return out;
}

std::size_t count_data_rows(const std::string& csv) {
  std::istringstream in(strip_comments(csv));
  std::string line;
  std::size_t n = 0;
  std::getline(in, line);
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("usage and version") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"match"}).code == kExitUsage);
  CHECK(run({"--threads", "-2", "match", "a", "b"}).code == kExitUsage);
  const auto h = run({"--help"});
  CHECK(h.code == kExitOk);
  CHECK(h.out.find("segment") != std::string::npos);
  const auto v = run({"--version"});
  CHECK(v.code == kExitOk);
  CHECK(v.out.rfind(std::string("lfm ") + kToolkitVersion, 0) == 0);
  CHECK(v.out.find("LMDICT1") != std::string::npos);
}

TEST_CASE("the installed tool reports exit codes from main") {
  const std::string tool = LFM_TOOL_PATH;
  REQUIRE(fs::exists(tool));
  const auto dir = scratch_dir("cli_binary");
  const auto status = [&](const std::string& args) {
    const int s = std::system((shell_quote(tool) + " " + args + " >" + shell_quote((dir / "o.txt").string()) + " 2>&1").c_str());
    return WEXITSTATUS(s);
  };
  CHECK(status("--version") == 0);
  CHECK(slurp(dir / "o.txt").rfind("lfm ", 0) == 0);
  CHECK(status("") == 1);
  CHECK(status("extract /nonexistent/x.pgm") == 2);
  CHECK(slurp(dir / "o.txt").rfind("error: ", 0) == 0);
}

TEST_CASE("segment command") {
  const auto dir = scratch_dir("cli_segment");
  SynthSpec half;
  half.region = RegionKind::LeftHalf;
  half.orientation = 25;
  half.noise.sigma = 20;
  const auto r = generate(half);
  save_pgm(r.image, dir / "half.pgm");
  const auto s = run({"segment", (dir / "half.pgm").string(), "-o", (dir / "half.roi").string(), "--dump-dir",
                      (dir / "dump").string()});
  REQUIRE(s.code == kExitOk);
  const auto roi = load_roi(dir / "half.roi");
  CHECK(roi.vertices.size() >= 3);
  CHECK(roi.contains({60, 128}));
  CHECK_FALSE(roi.contains({220, 128}));
  for (const char* f : {"dictionary.lmd", "atoms.tsv", "votes.pgm", "otsu_mask.pgm", "mask.pgm"})
    CHECK(fs::exists(dir / "dump" / f));

  SynthSpec noise;
  noise.region = RegionKind::None;
  noise.noise.sigma = 20;
  noise.seed = 2;
  save_pgm(generate(noise).image, dir / "noise.pgm");
  const auto n = run({"segment", (dir / "noise.pgm").string(), "-o", (dir / "noise.roi").string()});
  CHECK(n.code == kExitOk);
  CHECK(load_roi(dir / "noise.roi").empty());

  CHECK(run({"segment", (dir / "missing.pgm").string(), "-o", (dir / "m.roi").string()}).code == kExitInput);
  save_pgm(GrayImage(20, 20, 5), dir / "tiny.pgm");
  CHECK(run({"segment", (dir / "tiny.pgm").string(), "-o", (dir / "t.roi").string()}).code == kExitInput);
  CHECK(run({"--param", "stride=0", "segment", (dir / "half.pgm").string(), "-o", (dir / "x.roi").string()}).code ==
        kExitInput);
}

TEST_CASE("extract and match commands") {
  const auto dir = scratch_dir("cli_match");
  SynthSpec s;
  s.orientation = 50;
  s.minutiae = {{100, 100, MinutiaType::Ending, 1}, {160, 150, MinutiaType::Bifurcation, 1}};
  save_pgm(generate(s).image, dir / "p.pgm");
  const auto e = run({"extract", (dir / "p.pgm").string(), "-o", (dir / "p.min").string()});
  REQUIRE(e.code == kExitOk);
  CHECK(load_minutiae(dir / "p.min").id == "p");
  write_text(dir / "empty.roi", "ROI 0\n");
  const auto none = run({"extract", (dir / "p.pgm").string(), "--roi", (dir / "empty.roi").string()});
  CHECK(none.code == kExitOk);
  CHECK(strip_comments(none.out).empty());

  auto base = random_minutiae(30, 500, 500, 30, 3);
  save_minutiae(base, dir / "c.min");
  const auto m = run({"match", (dir / "c.min").string(), (dir / "c.min").string(), "--fitness-csv",
                      (dir / "fit.csv").string()});
  REQUIRE(m.code == kExitOk);
  CHECK(strip_comments(m.out).rfind("score 30\n", 0) == 0);
  CHECK(m.out.find("# population=400") != std::string::npos);
  CHECK(slurp(dir / "fit.csv").rfind("generation,best_fitness\n0,", 0) == 0);

  const auto pp = plant_transformed_pair(base, random_transform_within(base, ParamRanges{}, 500, 500, 4), 0, 0.2, 0, 4);
  save_minutiae(pp.l, dir / "l.min");
  const auto planted = run({"match", (dir / "l.min").string(), (dir / "c.min").string()});
  REQUIRE(planted.code == kExitOk);
  CHECK(strip_comments(planted.out).rfind("score 24\n", 0) == 0);

  write_text(dir / "bad.min", "1 2 3\n");
  CHECK(run({"match", (dir / "bad.min").string(), (dir / "c.min").string()}).code == kExitInput);
  write_text(dir / "none.min", "");
  CHECK(run({"match", (dir / "none.min").string(), (dir / "c.min").string()}).code == kExitInput);
}

TEST_CASE("identify command: shape, determinism, thread invariance") {
  const auto dir = scratch_dir("cli_identify");
  const auto g = run({"synth-gallery", dir.string(), "--size", "10", "--latents", "3"});
  REQUIRE(g.code == kExitOk);
  CHECK(fs::exists(dir / "manifest.txt"));
  const std::vector<std::string> common{"--param", "subset_size=10", "--param", "trials=2", "--param", "population=200"};
  auto identify = [&](const std::string& threads, const std::string& out) {
    std::vector<std::string> a = common;
    a.insert(a.end(), {"--threads", threads, "identify", (dir / "manifest.txt").string(), (dir / "gallery").string(),
                       "-o", (dir / out).string()});
    return run(a);
  };
  const auto one = identify("1", "a.csv");
  REQUIRE(one.code == kExitOk);
  const auto csv = slurp(dir / "a.csv");
  CHECK(count_data_rows(csv) == 6);
  CHECK(csv.find("# subset_size=10") != std::string::npos);
  CHECK(one.out.rfind("overall cells=6", 0) == 0);
  CHECK(one.out.find("rank1=1.0000") != std::string::npos);
  REQUIRE(identify("1", "b.csv").code == kExitOk);
  CHECK(slurp(dir / "b.csv") == csv);
  REQUIRE(identify("4", "c.csv").code == kExitOk);
  CHECK(slurp(dir / "c.csv") == csv);

  write_text(dir / "broken.txt", "latent q00 latents/q00.min mate=g999\n");
  CHECK(run({"identify", (dir / "broken.txt").string(), (dir / "gallery").string()}).code == kExitInput);
}

TEST_CASE("eval-seg command") {
  const auto dir = scratch_dir("cli_eval");
  const auto truth = random_minutiae(10, 400, 400, 20, 1);
  MinutiaSet spurious = random_minutiae(10, 400, 400, 20, 2);
  for (auto& m : spurious.points) m.x += 1000;
  MinutiaSet whole = truth, roi;
  whole.points.insert(whole.points.end(), spurious.points.begin(), spurious.points.end());
  roi.points.assign(truth.points.begin(), truth.points.begin() + 8);
  roi.points.insert(roi.points.end(), spurious.points.begin(), spurious.points.begin() + 2);
  save_minutiae(truth, dir / "t.min");
  save_minutiae(whole, dir / "w.min");
  save_minutiae(roi, dir / "r.min");
  const auto one = run({"eval-seg", (dir / "t.min").string(), (dir / "w.min").string(), (dir / "r.min").string()});
  REQUIRE(one.code == kExitOk);
  CHECK(strip_comments(one.out).find("r,0.800000,0.200000,0.800000,1,1\n") != std::string::npos);

  write_text(dir / "batch.txt", "# id truth whole roi\nx t.min w.min r.min\ny t.min w.min t.min\n");
  const auto b = run({"eval-seg", "--batch", (dir / "batch.txt").string(), "-o", (dir / "e.csv").string()});
  REQUIRE(b.code == kExitOk);
  const auto csv = strip_comments(slurp(dir / "e.csv"));
  CHECK(csv.find("y,1.000000,0.000000,1.000000,1,1\n") != std::string::npos);
  CHECK(csv.find("mean,0.900000,0.100000,0.900000,2,2\n") != std::string::npos);

  write_text(dir / "badbatch.txt", "x t.min w.min\n");
  CHECK(run({"eval-seg", "--batch", (dir / "badbatch.txt").string()}).code == kExitInput);
  CHECK(run({"eval-seg", (dir / "t.min").string()}).code == kExitInput);
}

TEST_CASE("synth and learn-dict commands") {
  const auto dir = scratch_dir("cli_synth");
  write_text(dir / "spec.txt", "region = left-half\norientation = 30\nlines = 2\nseed = 5\n");
  REQUIRE(run({"synth", (dir / "spec.txt").string(), (dir / "a").string()}).code == kExitOk);
  REQUIRE(run({"synth", (dir / "spec.txt").string(), (dir / "b").string()}).code == kExitOk);
  CHECK(slurp(dir / "a" / "synth.pgm") == slurp(dir / "b" / "synth.pgm"));
  REQUIRE(run({"--seed", "6", "synth", (dir / "spec.txt").string(), (dir / "c").string(), "--stem", "z"}).code == kExitOk);
  CHECK(fs::exists(dir / "c" / "z_mask.pgm"));
  CHECK(slurp(dir / "c" / "z.pgm") != slurp(dir / "a" / "synth.pgm"));
  write_text(dir / "bad.txt", "period = 2\n");
  CHECK(run({"synth", (dir / "bad.txt").string(), (dir / "d").string()}).code == kExitInput);

  const auto l = run({"--param", "epochs=2", "learn-dict", (dir / "a" / "synth.pgm").string(), "-o",
                      (dir / "d.lmd").string(), "--report", (dir / "atoms.tsv").string()});
  REQUIRE(l.code == kExitOk);
  CHECK(l.out.rfind("error initial ", 0) == 0);
  CHECK(slurp(dir / "d.lmd").rfind(std::string("LMDICT1\0", 8), 0) == 0);
  CHECK(fs::exists(dir / "atoms.tsv"));
}

TEST_CASE("config file precedence") {
  const auto dir = scratch_dir("cli_config");
  write_text(dir / "cfg.txt", "population = 50\nmax_generations = 5\nseed = 3\n");
  save_minutiae(random_minutiae(12, 300, 300, 10, 1), dir / "c.min");
  const auto a = run({"--config", (dir / "cfg.txt").string(), "--param", "population=60", "match",
                      (dir / "c.min").string(), (dir / "c.min").string()});
  REQUIRE(a.code == kExitOk);
  CHECK(a.out.find("# population=60\n") != std::string::npos);
  CHECK(a.out.find("# max_generations=5\n") != std::string::npos);
  CHECK(a.out.find("# seed=3\n") != std::string::npos);
  const auto b = run({"--config", (dir / "cfg.txt").string(), "--seed", "8", "match", (dir / "c.min").string(),
                      (dir / "c.min").string()});
  CHECK(b.out.find("# seed=8\n") != std::string::npos);
  write_text(dir / "bad.txt", "populaton = 50\n");
  CHECK(run({"--config", (dir / "bad.txt").string(), "match", (dir / "c.min").string(), (dir / "c.min").string()})
            .code == kExitInput);
  CHECK(run({"--config", (dir / "none.txt").string(), "match", (dir / "c.min").string(), (dir / "c.min").string()})
            .code == kExitInput);
}
