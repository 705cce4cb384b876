#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lfm/evaluate.hpp"
#include "lfm/gamatch.hpp"
#include "lfm/identify.hpp"
#include "lfm/minutiae.hpp"
#include "lfm/segmentation.hpp"

namespace lfm {

/// Every tunable of the pipeline, pre-filled with the defaults.
/// Layering: defaults, then a "key = value" file, then individual overrides.
struct RunConfig {
  SegmentConfig segment;
  ExtractorConfig extractor;
  GaConfig ga;
  TrialPlan plan;
  EvalTolerance eval;
  UndefinedMode eval_mode = UndefinedMode::Exclude;
  std::uint64_t seed = 1;

  /// Throws ConfigError for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  /// Applies "key=value".
  void apply_override(const std::string& assignment);
  void read(std::istream& in);
  void load_file(const std::filesystem::path& path);
  void validate() const;

  /// "key=value" for every key, in a fixed order.
  std::vector<std::string> echo() const;
  static std::vector<std::string> keys();

  /// Module configs with the global seed applied.
  SegmentConfig segment_config() const;
  GaConfig ga_config() const;
  TrialPlan trial_plan() const;
};

}  // namespace lfm
