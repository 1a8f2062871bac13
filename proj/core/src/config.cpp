#include "pixelflow/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace pixelflow {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct Field {
  std::string_view key;
  std::size_t line;
  std::string_view value;
  const std::filesystem::path* base;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(line, std::string(key) + ": " + what);
  }

  std::uint64_t u64() const {
    std::uint64_t v = 0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc{} || ptr != end) fail("expected a non-negative integer, got '" + std::string(value) + "'");
    return v;
  }
  std::size_t size(std::size_t lo = 0) const {
    const auto v = u64();
    if (v < lo) fail("must be at least " + std::to_string(lo));
    return static_cast<std::size_t>(v);
  }
  double real() const { return parse_real(value); }
  double parse_real(std::string_view s) const {
    double v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
      fail("expected a finite number, got '" + std::string(s) + "'");
    }
    return v;
  }
  double in_range(double lo, double hi) const {
    const double v = real();
    if (!(v >= lo && v <= hi)) {
      std::ostringstream ss;
      ss << "must lie in [" << lo << ", " << hi << "]";
      fail(ss.str());
    }
    return v;
  }
  double positive() const {
    const double v = real();
    if (!(v > 0.0)) fail("must be positive");
    return v;
  }
  bool boolean() const {
    if (value == "true") return true;
    if (value == "false") return false;
    fail("expected true or false");
  }
  std::vector<double> list() const {
    std::vector<double> out;
    std::string_view rest = value;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      out.push_back(parse_real(trim(rest.substr(0, comma))));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    if (out.empty()) fail("expected a comma-separated list of numbers");
    return out;
  }
  std::filesystem::path path() const {
    if (value.empty()) fail("empty path");
    std::filesystem::path p{std::string(value)};
    return p.is_absolute() || base->empty() ? p : *base / p;
  }
};

using Setter = std::function<void(RunConfig&, const Field&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"model.hidden_dim", [](RunConfig& c, const Field& f) { c.model.hidden_dim = f.size(1); }},
      {"model.depth", [](RunConfig& c, const Field& f) { c.model.depth = f.size(1); }},
      {"model.heads", [](RunConfig& c, const Field& f) { c.model.heads = f.size(1); }},
      {"model.patch_size", [](RunConfig& c, const Field& f) { c.model.patch_size = f.size(1); }},
      {"model.channels", [](RunConfig& c, const Field& f) { c.model.channels = f.size(1); }},
      {"model.num_classes", [](RunConfig& c, const Field& f) { c.model.num_classes = f.size(1); }},
      {"model.resolution", [](RunConfig& c, const Field& f) { c.model.max_resolution = f.size(1); }},
      {"model.mlp_ratio", [](RunConfig& c, const Field& f) { c.model.mlp_ratio = f.size(1); }},
      {"model.frequency_dim", [](RunConfig& c, const Field& f) { c.model.frequency_dim = f.size(2); }},

      {"schedule.stages", [](RunConfig& c, const Field& f) { c.schedule.stages = f.size(1); }},
      {"schedule.boundaries", [](RunConfig& c, const Field& f) { c.schedule.boundaries = f.list(); }},

      {"train.steps", [](RunConfig& c, const Field& f) { c.train.steps = f.size(); }},
      {"train.batch_size", [](RunConfig& c, const Field& f) { c.train.batch_size = f.size(); }},
      {"train.lr", [](RunConfig& c, const Field& f) { c.train.optimizer.lr = f.positive(); }},
      {"train.beta1", [](RunConfig& c, const Field& f) { c.train.optimizer.beta1 = f.in_range(0.0, 0.999999); }},
      {"train.beta2", [](RunConfig& c, const Field& f) { c.train.optimizer.beta2 = f.in_range(0.0, 0.999999); }},
      {"train.adam_eps", [](RunConfig& c, const Field& f) { c.train.optimizer.eps = f.positive(); }},
      {"train.weight_decay", [](RunConfig& c, const Field& f) { c.train.optimizer.weight_decay = f.in_range(0.0, 1.0); }},
      {"train.ema_decay", [](RunConfig& c, const Field& f) { c.train.ema_decay = f.in_range(0.0, 1.0); }},
      {"train.p_drop", [](RunConfig& c, const Field& f) { c.train.p_drop = f.in_range(0.0, 1.0); }},
      {"train.seed", [](RunConfig& c, const Field& f) { c.train.seed = f.u64(); }},
      {"train.checkpoint_every", [](RunConfig& c, const Field& f) { c.train.checkpoint_every = f.size(); }},
      {"train.out_dir", [](RunConfig& c, const Field& f) { c.train.out_dir = f.path(); }},

      {"data.path", [](RunConfig& c, const Field& f) { c.data.path = f.path(); }},
      {"data.generate", [](RunConfig& c, const Field& f) { c.data.generate = f.boolean(); }},
      {"data.count", [](RunConfig& c, const Field& f) { c.data.count = f.size(1); }},
      {"data.seed", [](RunConfig& c, const Field& f) { c.data.seed = f.u64(); }},

      {"sample.steps_per_stage", [](RunConfig& c, const Field& f) { c.sample.steps_per_stage = f.size(1); }},
      {"sample.solver", [](RunConfig& c, const Field& f) {
         try {
           c.sample.solver = parse_solver(std::string(f.value));
         } catch (const std::invalid_argument& e) {
           f.fail(e.what());
         }
       }},
      {"sample.atol", [](RunConfig& c, const Field& f) { c.sample.atol = f.positive(); }},
      {"sample.cfg_max", [](RunConfig& c, const Field& f) { c.sample.cfg_max = f.in_range(1.0, 1e6); }},
      {"sample.cfg_fractions", [](RunConfig& c, const Field& f) { c.sample.cfg_fractions = f.list(); }},
      {"sample.renoise_lambda", [](RunConfig& c, const Field& f) { c.sample.renoise_lambda = f.in_range(0.0, 1.0); }},
      {"sample.seed", [](RunConfig& c, const Field& f) { c.sample.seed = f.u64(); }},
      {"sample.use_ema", [](RunConfig& c, const Field& f) { c.sample_ema = f.boolean(); }},
  };
  return table;
}

const std::set<std::string_view> kSections{"model", "schedule", "train", "data", "sample"};

}  // namespace

ConfigError::ConfigError(std::size_t line, const std::string& what)
    : std::runtime_error(line ? "config line " + std::to_string(line) + ": " + what : "config: " + what),
      line_(line) {}

StageSchedule RunConfig::build_stage_schedule() const {
  if (schedule.boundaries.empty()) {
    return StageSchedule::uniform(schedule.stages, model.max_resolution, model.patch_size);
  }
  return StageSchedule::with_boundaries(schedule.boundaries, model.max_resolution, model.patch_size);
}

void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
  if (!schedule.boundaries.empty() && schedule.boundaries.size() != schedule.stages + 1) {
    throw ConfigError(0, "schedule.boundaries needs stages + 1 entries");
  }
  try {
    build_stage_schedule();
    sample.validate(schedule.stages);
  } catch (const std::exception& e) {
    throw ConfigError(0, e.what());
  }
  if (model.num_classes > kMaxShapeClasses && data.generate) {
    throw ConfigError(0, "the shapes generator supports at most 16 classes");
  }
  const auto res = model.max_resolution;
  if (data.generate && res != 16 && res != 32 && res != 64) {
    throw ConfigError(0, "the shapes generator supports resolutions 16, 32 and 64");
  }
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  const auto& table = setters();
  std::set<std::string> seen;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_no, "unterminated section header");
      const auto name = trim(line.substr(1, line.size() - 2));
      if (!kSections.contains(name)) throw ConfigError(line_no, "unknown section [" + std::string(name) + "]");
      section = name;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(line_no, "key '" + std::string(key) + "' outside any section");
    const std::string full = section + "." + std::string(key);
    const auto it = table.find(full);
    if (it == table.end()) throw ConfigError(line_no, "unknown key '" + full + "'");
    if (!seen.insert(full).second) throw ConfigError(line_no, "duplicate key '" + full + "'");
    it->second(cfg, Field{full, line_no, value, &base_dir});
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

std::string format_run_config(const RunConfig& c) {
  std::ostringstream out;
  out.precision(17);
  auto list = [&](const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ", " : "") << v[i];
  };
  out << "[model]\n"
      << "hidden_dim = " << c.model.hidden_dim << "\n"
      << "depth = " << c.model.depth << "\n"
      << "heads = " << c.model.heads << "\n"
      << "patch_size = " << c.model.patch_size << "\n"
      << "channels = " << c.model.channels << "\n"
      << "num_classes = " << c.model.num_classes << "\n"
      << "resolution = " << c.model.max_resolution << "\n"
      << "mlp_ratio = " << c.model.mlp_ratio << "\n"
      << "frequency_dim = " << c.model.frequency_dim << "\n\n"
      << "[schedule]\n"
      << "stages = " << c.schedule.stages << "\n";
  if (!c.schedule.boundaries.empty()) {
    out << "boundaries = ";
    list(c.schedule.boundaries);
    out << "\n";
  }
  out << "\n[train]\n"
      << "steps = " << c.train.steps << "\n"
      << "batch_size = " << c.train.batch_size << "\n"
      << "lr = " << c.train.optimizer.lr << "\n"
      << "beta1 = " << c.train.optimizer.beta1 << "\n"
      << "beta2 = " << c.train.optimizer.beta2 << "\n"
      << "adam_eps = " << c.train.optimizer.eps << "\n"
      << "weight_decay = " << c.train.optimizer.weight_decay << "\n"
      << "ema_decay = " << c.train.ema_decay << "\n"
      << "p_drop = " << c.train.p_drop << "\n"
      << "seed = " << c.train.seed << "\n"
      << "checkpoint_every = " << c.train.checkpoint_every << "\n"
      << "out_dir = " << c.train.out_dir.string() << "\n\n"
      << "[data]\n"
      << "path = " << c.data.path.string() << "\n"
      << "generate = " << (c.data.generate ? "true" : "false") << "\n"
      << "count = " << c.data.count << "\n"
      << "seed = " << c.data.seed << "\n\n"
      << "[sample]\n"
      << "steps_per_stage = " << c.sample.steps_per_stage << "\n"
      << "solver = " << solver_name(c.sample.solver) << "\n"
      << "atol = " << c.sample.atol << "\n"
      << "cfg_max = " << c.sample.cfg_max << "\n";
  if (!c.sample.cfg_fractions.empty()) {
    out << "cfg_fractions = ";
    list(c.sample.cfg_fractions);
    out << "\n";
  }
  out << "renoise_lambda = " << c.sample.renoise_lambda << "\n"
      << "seed = " << c.sample.seed << "\n"
      << "use_ema = " << (c.sample_ema ? "true" : "false") << "\n";
  return out.str();
}

}  // namespace pixelflow
