#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lfm/minutiae.hpp"

namespace lfm {

struct EvalTolerance {
  double delta_d = 15.0;
  double delta_o = 20.0;
  void validate() const;
};

/// Size of a one-to-one correspondence between A and B: greedy by ascending
/// distance among pairs within both tolerances. Types are ignored.
int set_intersection(const MinutiaSet& a, const MinutiaSet& b, const EvalTolerance& tol = {});

struct SegEvalResult {
  std::optional<double> gmpr;
  std::optional<double> fmar;
  std::optional<double> auc;
  std::vector<std::string> warnings;
};

/// `truth` is the ground truth, `whole` the whole-image extraction, `roi` the ROI extraction.
/// A zero denominator leaves that metric undefined; ratios above 1 are clamped with a warning.
SegEvalResult gmpr_fmar(const MinutiaSet& truth, const MinutiaSet& whole, const MinutiaSet& roi,
                        const EvalTolerance& tol = {});

/// (gmpr + 1 - fmar) / 2. Inputs must lie in [0, 1].
double auc_two_point(double gmpr, double fmar);
std::optional<double> auc_two_point(std::optional<double> gmpr, std::optional<double> fmar);

enum class UndefinedMode {
  Exclude,   ///< undefined values are left out of the means
  ZeroFill,  ///< undefined values count as 0
};

struct MetricMean {
  std::optional<double> mean;
  int defined = 0;
  int undefined = 0;
};

struct BatchSummary {
  int images = 0;
  MetricMean gmpr;
  MetricMean fmar;
  MetricMean auc;
};

BatchSummary batch_summary(const std::vector<SegEvalResult>& results, UndefinedMode mode = UndefinedMode::Exclude);

struct NamedEvalResult {
  std::string id;
  SegEvalResult result;
};

/// Header "id,gmpr,fmar,auc,gmpr_defined,fmar_defined", one row per image, then a "mean" row.
void write_eval_csv(std::ostream& out, const std::vector<NamedEvalResult>& rows, const BatchSummary& summary);

}  // namespace lfm
