#include <map>

#include "binio.hpp"
#include "pixelflow/checkpoint.hpp"
#include "pixelflow/dataset.hpp"

namespace pixelflow {

namespace {

constexpr std::string_view kCheckpointMagic = "PXFC";
constexpr std::uint32_t kCheckpointVersion = 1;

struct Record {
  Shape shape;
  std::vector<double> data;
};

void write_record(detail::ByteWriter& w, const std::string& name, const Shape& shape,
                  std::span<const double> data) {
  if (data.size() != shape_numel(shape)) {
    throw std::invalid_argument("save_checkpoint: record '" + name + "' holds " + std::to_string(data.size()) +
                                " values for shape " + shape_string(shape));
  }
  w.str(name);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
  for (double v : data) w.f64(v);
}

[[noreturn]] void invalid(const std::string& what) {
  throw DataError(DataErrorKind::invalid, "load_checkpoint: " + what);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto& cfg = ckpt.params.config;
  const auto named = ckpt.params.named();
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  for (auto v : {cfg.hidden_dim, cfg.depth, cfg.heads, cfg.patch_size, cfg.channels,
                 cfg.num_classes, cfg.max_resolution, cfg.mlp_ratio, cfg.frequency_dim}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  const auto& sched = ckpt.schedule;
  w.u32(static_cast<std::uint32_t>(sched.stages()));
  w.u32(static_cast<std::uint32_t>(sched.target_resolution()));
  w.u32(static_cast<std::uint32_t>(sched.patch_size()));
  for (double b : sched.boundaries()) w.f64(b);
  w.u64(ckpt.step);
  const auto& opt = ckpt.optimizer;
  w.u64(opt.step);
  for (double v : {opt.hyper.lr, opt.hyper.beta1, opt.hyper.beta2, opt.hyper.eps, opt.hyper.weight_decay}) {
    w.f64(v);
  }
  w.str(ckpt.rng_state);

  const bool moments = opt.first_moment.size() == named.size();
  const std::size_t groups = 1 + (moments ? 2 : 0) + (ckpt.ema ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(groups * named.size()));
  for (const auto& p : named) write_record(w, "param/" + p.name, p.tensor.shape(), p.tensor.data());
  if (moments) {
    for (std::size_t i = 0; i < named.size(); ++i) {
      write_record(w, "adam_m/" + named[i].name, named[i].tensor.shape(), opt.first_moment[i]);
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
      write_record(w, "adam_v/" + named[i].name, named[i].tensor.shape(), opt.second_moment[i]);
    }
  }
  if (ckpt.ema) {
    for (std::size_t i = 0; i < named.size(); ++i) {
      write_record(w, "ema/" + named[i].name, named[i].tensor.shape(), ckpt.ema->values.at(i));
    }
  }
  detail::write_file(path, w.buffer(), "save_checkpoint");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path, "load_checkpoint");
  detail::ByteReader r(bytes, "load_checkpoint");
  if (bytes.size() < kCheckpointMagic.size() || r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw DataError(DataErrorKind::bad_magic, "load_checkpoint: " + path.string() + " is not a PXFC file");
  }
  if (const auto version = r.u32(); version != kCheckpointVersion) {
    throw DataError(DataErrorKind::bad_version,
                    "load_checkpoint: unsupported PXFC version " + std::to_string(version));
  }
  ModelConfig cfg;
  for (auto* f : {&cfg.hidden_dim, &cfg.depth, &cfg.heads, &cfg.patch_size, &cfg.channels,
                  &cfg.num_classes, &cfg.max_resolution, &cfg.mlp_ratio, &cfg.frequency_dim}) {
    *f = r.u32();
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    invalid(e.what());
  }
  const auto stages = r.u32();
  const auto target = r.u32();
  const auto patch = r.u32();
  if (stages == 0 || stages > 30) invalid("bad stage count");
  r.need(stages + 1, 8);
  std::vector<double> boundaries(stages + 1);
  for (auto& b : boundaries) b = r.f64();
  std::optional<StageSchedule> schedule;
  try {
    schedule = StageSchedule::with_boundaries(boundaries, target, patch);
  } catch (const std::exception& e) {
    invalid(e.what());
  }
  const auto step = r.u64();
  OptimizerState opt;
  opt.step = r.u64();
  opt.hyper.lr = r.f64();
  opt.hyper.beta1 = r.f64();
  opt.hyper.beta2 = r.f64();
  opt.hyper.eps = r.f64();
  opt.hyper.weight_decay = r.f64();
  std::string rng_state = r.str();

  std::map<std::string, Record> records;
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    Record rec;
    const auto rank = r.u32();
    r.need(rank, 4);
    for (std::uint32_t k = 0; k < rank; ++k) rec.shape.push_back(r.u32());
    const auto n = shape_numel(rec.shape);
    r.need(n, 8);
    rec.data.resize(n);
    for (auto& v : rec.data) v = r.f64();
    if (!records.emplace(std::move(name), std::move(rec)).second) invalid("duplicate record");
  }
  if (!r.at_end()) invalid("trailing bytes after payload");

  // Shapes come from a freshly built model with the stored config.
  Rng scratch(0);
  ModelParams params = ModelParams::init(cfg, scratch);
  auto named = params.named();
  auto take = [&](const std::string& prefix, const NamedTensor& p, bool required) -> std::optional<std::vector<double>> {
    auto it = records.find(prefix + p.name);
    if (it == records.end()) {
      if (required) invalid("missing record '" + prefix + p.name + "'");
      return std::nullopt;
    }
    if (it->second.shape != p.tensor.shape()) {
      invalid("parameter '" + p.name + "' has shape " + shape_string(it->second.shape) +
              " but the model config expects " + shape_string(p.tensor.shape()));
    }
    auto data = std::move(it->second.data);
    records.erase(it);
    return data;
  };

  for (auto& p : named) {
    auto data = *take("param/", p, true);
    std::copy(data.begin(), data.end(), p.tensor.mutable_data().begin());
  }
  const bool has_m = records.contains("adam_m/" + named.front().name);
  if (has_m) {
    for (auto& p : named) opt.first_moment.push_back(*take("adam_m/", p, true));
    for (auto& p : named) opt.second_moment.push_back(*take("adam_v/", p, true));
  } else {
    opt = OptimizerState::init(named, opt.hyper);
  }
  std::optional<EmaShadow> ema;
  if (records.contains("ema/" + named.front().name)) {
    ema.emplace();
    for (auto& p : named) ema->values.push_back(*take("ema/", p, true));
  }
  if (!records.empty()) invalid("unexpected record '" + records.begin()->first + "'");

  return Checkpoint{std::move(params), std::move(*schedule), std::move(opt), std::move(ema), step,
                    std::move(rng_state)};
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected_model,
                           const StageSchedule& expected_schedule) {
  auto ckpt = load_checkpoint(path);
  if (!(ckpt.params.config == expected_model)) {
    invalid("model config in " + path.string() + " does not match the run config");
  }
  if (!(ckpt.schedule == expected_schedule)) {
    invalid("stage schedule in " + path.string() + " does not match the run config");
  }
  return ckpt;
}

}  // namespace pixelflow
