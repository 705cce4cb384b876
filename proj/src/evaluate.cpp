#include "lfm/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "lfm/error.hpp"

namespace lfm {

void EvalTolerance::validate() const {
  if (!(delta_d > 0) || !(delta_o > 0)) throw ConfigError("evaluation tolerances must be > 0");
}

int set_intersection(const MinutiaSet& a, const MinutiaSet& b, const EvalTolerance& tol) {
  struct Cand {
    double d;
    double o;
    std::size_t i;
    std::size_t j;
  };
  std::vector<Cand> cand;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = std::hypot(a.points[i].x - b.points[j].x, a.points[i].y - b.points[j].y);
      const double o = angle_difference(a.points[i].orientation, b.points[j].orientation);
      if (d <= tol.delta_d && o <= tol.delta_o) cand.push_back({d, o, i, j});
    }
  std::sort(cand.begin(), cand.end(), [](const Cand& x, const Cand& y) {
    if (x.d != y.d) return x.d < y.d;
    if (x.o != y.o) return x.o < y.o;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  std::vector<char> ua(a.size(), 0), ub(b.size(), 0);
  int n = 0;
  for (const auto& c : cand) {
    if (ua[c.i] || ub[c.j]) continue;
    ua[c.i] = ub[c.j] = 1;
    ++n;
  }
  return n;
}

namespace {

std::optional<double> ratio(double num, double den, const char* name, std::vector<std::string>& warnings) {
  if (den <= 0) return std::nullopt;
  double r = num / den;
  if (r > 1.0) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s = %g/%g exceeds 1, clamped", name, num, den);
    warnings.emplace_back(buf);
    r = 1.0;
  }
  return std::max(0.0, r);
}

}  // namespace

SegEvalResult gmpr_fmar(const MinutiaSet& truth, const MinutiaSet& whole, const MinutiaSet& roi,
                        const EvalTolerance& tol) {
  tol.validate();
  SegEvalResult r;
  const int t2 = set_intersection(truth, whole, tol);
  const int t3 = set_intersection(truth, roi, tol);
  r.gmpr = ratio(t3, t2, "GMPR", r.warnings);
  r.fmar = ratio(static_cast<double>(roi.size()) - t3, static_cast<double>(whole.size()) - t2, "FMAR", r.warnings);
  r.auc = auc_two_point(r.gmpr, r.fmar);
  return r;
}

double auc_two_point(double gmpr, double fmar) {
  if (!(gmpr >= 0 && gmpr <= 1) || !(fmar >= 0 && fmar <= 1)) throw InvalidArgument("GMPR and FMAR must lie in [0, 1]");
  return (gmpr + 1.0 - fmar) / 2.0;
}

std::optional<double> auc_two_point(std::optional<double> gmpr, std::optional<double> fmar) {
  if (!gmpr || !fmar) return std::nullopt;
  return auc_two_point(*gmpr, *fmar);
}

BatchSummary batch_summary(const std::vector<SegEvalResult>& results, UndefinedMode mode) {
  BatchSummary s;
  s.images = static_cast<int>(results.size());
  auto reduce = [&](auto pick) {
    MetricMean m;
    double sum = 0;
    int used = 0;
    for (const auto& r : results) {
      const std::optional<double>& v = pick(r);
      if (v) {
        ++m.defined;
        sum += *v;
        ++used;
      } else {
        ++m.undefined;
        if (mode == UndefinedMode::ZeroFill) ++used;
      }
    }
    if (used > 0) m.mean = sum / used;
    return m;
  };
  s.gmpr = reduce([](const SegEvalResult& r) -> const std::optional<double>& { return r.gmpr; });
  s.fmar = reduce([](const SegEvalResult& r) -> const std::optional<double>& { return r.fmar; });
  s.auc = reduce([](const SegEvalResult& r) -> const std::optional<double>& { return r.auc; });
  return s;
}

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace

void write_eval_csv(std::ostream& out, const std::vector<NamedEvalResult>& rows, const BatchSummary& summary) {
  out << "id,gmpr,fmar,auc,gmpr_defined,fmar_defined\n";
  for (const auto& row : rows)
    out << row.id << ',' << fmt(row.result.gmpr) << ',' << fmt(row.result.fmar) << ',' << fmt(row.result.auc) << ','
        << (row.result.gmpr ? 1 : 0) << ',' << (row.result.fmar ? 1 : 0) << '\n';
  out << "mean," << fmt(summary.gmpr.mean) << ',' << fmt(summary.fmar.mean) << ',' << fmt(summary.auc.mean) << ','
      << summary.gmpr.defined << ',' << summary.fmar.defined << '\n';
}

}  // namespace lfm
