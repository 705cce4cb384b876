#include "lfm/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "lfm/error.hpp"

namespace lfm {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* b = v.data();
  const char* e = b + v.size();
  const auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e) throw ConfigError("bad value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad value '" + v + "' for " + key + " (expected true or false)");
}

std::string str(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define INT_KEY(NAME, FIELD)                                                                     \
  Key {                                                                                          \
    NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_number<int>(NAME, v); },     \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                               \
  }
#define REAL_KEY(NAME, FIELD)                                                                    \
  Key {                                                                                          \
    NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_number<double>(NAME, v); },  \
        [](const RunConfig& c) { return str(c.FIELD); }                                          \
  }
#define BOOL_KEY(NAME, FIELD)                                                                    \
  Key {                                                                                          \
    NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(NAME, v); },            \
        [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); }               \
  }

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = {
      INT_KEY("patch_size", segment.patch_size),
      INT_KEY("stride", segment.stride),
      INT_KEY("atom_count", segment.train.atom_count),
      INT_KEY("sparsity", segment.train.sparsity),
      INT_KEY("epochs", segment.train.epochs),
      REAL_KEY("lambda", segment.train.lambda),
      Key{"coding",
          [](RunConfig& c, const std::string& v) {
            if (v == "omp") c.segment.train.coding = CodingMode::Omp;
            else if (v == "l1") c.segment.train.coding = CodingMode::L1;
            else throw ConfigError("coding must be omp or l1");
          },
          [](const RunConfig& c) { return std::string(c.segment.train.coding == CodingMode::Omp ? "omp" : "l1"); }},
      REAL_KEY("forgetting", segment.train.forgetting),
      REAL_KEY("xcorr_threshold", segment.atomid.xcorr_threshold),
      REAL_KEY("period_min", segment.atomid.valid_period.min),
      REAL_KEY("period_max", segment.atomid.valid_period.max),
      INT_KEY("closing_size", segment.morph.element_size),
      Key{"min_component_area",
          [](RunConfig& c, const std::string& v) {
            c.segment.morph.min_area = parse_number<std::size_t>("min_component_area", v);
          },
          [](const RunConfig& c) { return std::to_string(c.segment.morph.min_area); }},
      Key{"hull_of_all",
          [](RunConfig& c, const std::string& v) {
            c.segment.hull = parse_bool("hull_of_all", v) ? HullMode::AllComponents : HullMode::LargestComponent;
          },
          [](const RunConfig& c) {
            return std::string(c.segment.hull == HullMode::AllComponents ? "true" : "false");
          }},
      BOOL_KEY("border_compensation", segment.border_compensation),
      INT_KEY("extract_window", extractor.normalize_window),
      REAL_KEY("extract_min_std", extractor.min_local_std),
      INT_KEY("extract_border", extractor.border_margin),
      INT_KEY("population", ga.population),
      REAL_KEY("crossover_prob", ga.crossover_prob),
      REAL_KEY("mutation_prob", ga.mutation_prob),
      INT_KEY("max_generations", ga.max_generations),
      INT_KEY("stall_generations", ga.stall_generations),
      REAL_KEY("seeded_fraction", ga.seeded_fraction),
      BOOL_KEY("refine", ga.refine),
      REAL_KEY("delta_d", ga.tol.delta_d),
      REAL_KEY("delta_o", ga.tol.delta_o),
      INT_KEY("subset_size", plan.subset_size),
      INT_KEY("trials", plan.trials),
      REAL_KEY("eval_delta_d", eval.delta_d),
      REAL_KEY("eval_delta_o", eval.delta_o),
      Key{"eval_undefined",
          [](RunConfig& c, const std::string& v) {
            if (v == "exclude") c.eval_mode = UndefinedMode::Exclude;
            else if (v == "zero") c.eval_mode = UndefinedMode::ZeroFill;
            else throw ConfigError("eval_undefined must be exclude or zero");
          },
          [](const RunConfig& c) { return std::string(c.eval_mode == UndefinedMode::Exclude ? "exclude" : "zero"); }},
      Key{"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
          [](const RunConfig& c) { return std::to_string(c.seed); }},
  };
  return table;
}

#undef INT_KEY
#undef REAL_KEY
#undef BOOL_KEY

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& k : key_table())
    if (key == k.name) {
      k.set(*this, trim(value));
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::read(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open config " + path.string());
  read(in);
}

void RunConfig::validate() const {
  segment.validate();
  ga.validate();
  plan.validate();
  eval.validate();
  if (extractor.normalize_window < 3 || extractor.normalize_window % 2 == 0)
    throw ConfigError("extract_window must be an odd number >= 3");
  if (!(extractor.min_local_std >= 0)) throw ConfigError("extract_min_std must be >= 0");
  if (extractor.border_margin < 0) throw ConfigError("extract_border must be >= 0");
}

std::vector<std::string> RunConfig::echo() const {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.push_back(std::string(k.name) + "=" + k.get(*this));
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.emplace_back(k.name);
  return out;
}

SegmentConfig RunConfig::segment_config() const {
  SegmentConfig s = segment;
  s.train.seed = seed;
  return s;
}

GaConfig RunConfig::ga_config() const {
  GaConfig g = ga;
  g.seed = seed;
  return g;
}

TrialPlan RunConfig::trial_plan() const {
  TrialPlan p = plan;
  p.seed = seed;
  return p;
}

}  // namespace lfm
