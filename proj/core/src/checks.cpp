#include "pixelflow/checks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>

#include "pixelflow/checkpoint.hpp"
#include "pixelflow/dataset.hpp"
#include "pixelflow/ops.hpp"
#include "pixelflow/resample.hpp"
#include "pixelflow/rope.hpp"
#include "pixelflow/sampler.hpp"

namespace pixelflow {

namespace {

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(3);
  ss << v;
  return ss.str();
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), true);
}

Image random_image(std::size_t c, std::size_t res, Rng& rng) { return gaussian_image(c, res, res, rng); }

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Gradient of sum(f(x) * r) for a random probe r, compared with central
// differences of the same scalar.
CheckResult op_gradient(const std::string& name, Shape shape,
                        const std::function<Tensor(const Tensor&)>& f, Rng& rng) {
  const Tensor x = random_tensor(shape, rng, 0.8);
  const Tensor probe = [&] {
    NoGradGuard guard;
    const Tensor y = f(x.detach());
    return random_tensor(y.shape(), rng);
  }();
  const Tensor y = f(x);
  ops::sum(ops::mul(y, probe.detach())).backward();
  auto objective = [&](const Tensor& in) {
    NoGradGuard guard;
    return ops::sum(ops::mul(f(in), probe.detach())).item();
  };
  const Tensor numeric = finite_diff_grad(objective, x.detach(), 1e-5);
  const auto cmp = compare_gradients(x.grad(), numeric.data());
  return {"grad." + name, cmp.passed(1e-6), "relative error " + fmt(cmp.relative_error)};
}

std::vector<CheckResult> op_gradient_checks(Rng& rng) {
  const Tensor w = random_tensor({5, 4}, rng);
  const Tensor b = random_tensor({4}, rng);
  const Tensor other = random_tensor({6, 5}, rng);
  const std::vector<std::size_t> index{2, 0, 0, 5, 3};
  const std::vector<std::size_t> offsets{0, 4, 6, 12};
  std::vector<GridPosition> pos;
  for (std::size_t i = 0; i < 6; ++i) pos.push_back({double(i / 3), double(i % 3)});

  std::vector<CheckResult> out;
  out.push_back(op_gradient("add", {6, 5}, [&](const Tensor& x) { return ops::add(x, ops::reshape(ops::slice_rows(other.detach(), 0, 1), {5})); }, rng));
  out.push_back(op_gradient("mul", {6, 5}, [&](const Tensor& x) { return ops::mul(x, other.detach()); }, rng));
  out.push_back(op_gradient("matmul", {6, 5}, [&](const Tensor& x) { return ops::matmul(x, w.detach()); }, rng));
  out.push_back(op_gradient("linear", {6, 5}, [&](const Tensor& x) { return ops::linear(x, w.detach(), b.detach()); }, rng));
  out.push_back(op_gradient("transpose", {6, 5}, [](const Tensor& x) { return ops::transpose(x); }, rng));
  out.push_back(op_gradient("slice_cols", {6, 5}, [](const Tensor& x) { return ops::slice_cols(x, 1, 4); }, rng));
  out.push_back(op_gradient("gather_rows", {6, 5}, [&](const Tensor& x) { return ops::gather_rows(x, index); }, rng));
  out.push_back(op_gradient("softmax", {6, 5}, [](const Tensor& x) { return ops::softmax(x); }, rng));
  out.push_back(op_gradient("layer_norm", {6, 5}, [](const Tensor& x) { return ops::layer_norm(x, 1e-6); }, rng));
  out.push_back(op_gradient("gelu", {6, 5}, [](const Tensor& x) { return ops::gelu(x); }, rng));
  out.push_back(op_gradient("silu", {6, 5}, [](const Tensor& x) { return ops::silu(x); }, rng));
  out.push_back(op_gradient("rope_2d", {6, 8}, [&](const Tensor& x) { return rope_2d(x, pos, 2); }, rng));
  const Tensor kv = random_tensor({12, 8}, rng);
  out.push_back(op_gradient("segment_attention", {12, 8}, [&](const Tensor& x) {
    return ops::segment_attention(x, ops::scale(x, 0.5), ops::add(x, kv.detach()), offsets, 2);
  }, rng));
  return out;
}

CheckResult check_backbone(const GradientCheckOptions& options) {
  const auto report = check_backbone_gradients(gradient_check_model(), options);
  return {"grad.backbone", report.passed,
          "overall " + fmt(report.overall.relative_error) + ", worst tensor " + report.worst_tensor +
              " " + fmt(report.worst_tensor_error) + " over " + std::to_string(report.probes) + " probes"};
}

CheckResult check_euler_constant() {
  const auto sched = StageSchedule::uniform(2, 8, 1);
  Rng rng(11);
  const Image c = random_image(3, 4, rng);
  const Image x0 = random_image(3, 4, rng);
  FunctionVelocity field([&](const Image&, const StagePoint&, ClassLabel) { return c; });
  const Image x1 = euler_stage(field, x0, 1, sched, 7, 1.0, std::nullopt);
  double err = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) err = std::max(err, std::abs(x1.values[i] - (x0.values[i] + c.values[i])));
  return {"solver.euler_constant_field", err <= 1e-12, "max error " + fmt(err)};
}

CheckResult check_dopri5_exponential() {
  const auto sched = StageSchedule::uniform(1, 4, 1);
  Image x0(1, 2, 2);
  x0.values = {1.0, -0.5, 2.0, 0.25};
  FunctionVelocity field([](const Image& x, const StagePoint&, ClassLabel) { return x; });
  StageStats stats;
  const Image x1 = dopri5_stage(field, x0, 0, sched, 1e-6, 1.0, std::nullopt, &stats);
  double err = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) err = std::max(err, std::abs(x1.values[i] - std::exp(1.0) * x0.values[i]));
  return {"solver.dopri5_exponential", err <= 1e-5,
          "endpoint error " + fmt(err) + " in " + std::to_string(stats.accepted) + " steps"};
}

CheckResult check_dopri5_polynomial() {
  const auto sched = StageSchedule::uniform(1, 4, 1);
  Image x0(1, 2, 2, 0.5);
  FunctionVelocity field([](const Image& x, const StagePoint& at, ClassLabel) {
    return Image(x.channels, x.height, x.width, 3.0 * at.tau * at.tau);
  });
  const Image x1 = dopri5_stage(field, x0, 0, sched, 1e-6, 1.0, std::nullopt);
  double err = 0.0;
  for (double v : x1.values) err = std::max(err, std::abs(v - 1.5));
  return {"solver.dopri5_polynomial", err <= 4.0 * std::numeric_limits<double>::epsilon() * 1.5, "error " + fmt(err)};
}

CheckResult check_packing(const RunConfig& config) {
  Rng rng(config.train.seed + 17);
  ModelParams params = ModelParams::init(config.model, rng);
  randomize_parameters(params, rng, 0.02);
  const auto sched = config.build_stage_schedule();
  std::vector<SequenceSpec> specs;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto stage = i % sched.stages();
    const Image x = random_image(config.model.channels, sched.resolution(stage), rng);
    ClassLabel label = i == 2 ? ClassLabel{} : ClassLabel{rng.below(config.model.num_classes)};
    specs.push_back({patchify(x, config.model.patch_size), rng.uniform(), label});
  }
  const double diff = packing_discrepancy(params, specs);
  return {"packing.equivalence", diff <= 1e-10, "max difference " + fmt(diff)};
}

CheckResult check_rope_relative() {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> q(16), k(16);
    for (auto& v : q) v = rng.normal();
    for (auto& v : k) v = rng.normal();
    const GridPosition a{std::floor(rng.uniform() * 16), std::floor(rng.uniform() * 16)};
    const GridPosition b{std::floor(rng.uniform() * 16), std::floor(rng.uniform() * 16)};
    const GridPosition shift{std::floor(rng.uniform() * 32) - 16, std::floor(rng.uniform() * 32) - 16};
    auto dot = [&](GridPosition pq, GridPosition pk) {
      auto qq = q, kk = k;
      apply_rope_2d(qq, pq);
      apply_rope_2d(kk, pk);
      return std::inner_product(qq.begin(), qq.end(), kk.begin(), 0.0);
    };
    const double base = dot(a, b);
    const double moved = dot({a.row + shift.row, a.col + shift.col}, {b.row + shift.row, b.col + shift.col});
    worst = std::max(worst, std::abs(base - moved));
  }
  return {"rope.relative_position", worst <= 1e-10, "max deviation " + fmt(worst)};
}

CheckResult check_renoise_variance() {
  const auto sched = StageSchedule::uniform(4, 32, 2);
  const double lambda = 0.5;
  const std::size_t from = 1;  // ends at t = 0.75
  Rng rng(23);
  const Image x_end = random_image(3, sched.resolution(from), rng);
  const Image carried = upsample(x_end, 2);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  while (n < 100000) {
    const Image next = renoise_transition(x_end, from, sched, lambda, rng);
    for (std::size_t i = 0; i < next.size() && n < 100000; ++i, ++n) {
      const double r = next.values[i] - lambda * carried.values[i];
      sum += r;
      sq += r * r;
    }
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  const double gamma = renoise_gamma(from, sched, lambda);
  const double rel = std::abs(var - gamma * gamma) / (gamma * gamma);
  return {"renoise.variance", rel < 0.02, "relative deviation " + fmt(rel)};
}

CheckResult check_resample() {
  Rng rng(3);
  const Image x = random_image(3, 8, rng);
  const Image round_trip = downsample(upsample(x, 4), 4);
  const bool exact = round_trip.values == x.values;
  const Image flat(2, 16, 16, 0.375);
  const bool constant = downsample(flat, 8).values == std::vector<double>(8, 0.375);
  return {"resample.identities", exact && constant,
          std::string("down(up(x)) ") + (exact ? "exact" : "differs") + ", constants " +
              (constant ? "preserved" : "changed")};
}

CheckResult check_schedule() {
  Rng rng(9);
  double worst = 0.0;
  bool tiling = true;
  for (std::size_t stages = 1; stages <= 4; ++stages) {
    const auto sched = StageSchedule::uniform(stages, 32, 2);
    for (std::size_t s = 0; s + 1 < stages; ++s) tiling = tiling && sched.t_start(s) == sched.t_end(s + 1);
    tiling = tiling && sched.t_start(stages - 1) == 0.0 && sched.t_end(0) == 1.0;
    for (int i = 0; i < 2500; ++i) {
      const double t = rng.uniform();
      const auto at = sched.locate(t);
      worst = std::max(worst, std::abs(sched.global_time(at.stage, at.tau) - t));
    }
  }
  return {"schedule.round_trip", worst <= 1e-15 && tiling,
          "max error " + fmt(worst) + (tiling ? ", tiling exact" : ", tiling broken")};
}

CheckResult check_single_stage() {
  const auto sched = StageSchedule::uniform(1, 8, 2);
  Rng rng(13);
  const Image x1 = random_image(3, 8, rng);
  const Image eps = random_image(3, 8, rng);
  const auto ends = make_endpoints(x1, eps, 0, sched);
  const Image v = velocity_target(ends.start, ends.end);
  bool ok = ends.start.values == eps.values && ends.end.values == x1.values;
  for (std::size_t i = 0; i < v.size(); ++i) ok = ok && v.values[i] == x1.values[i] - eps.values[i];
  return {"flow.single_stage_reduction", ok, ok ? "endpoints (eps, x1)" : "endpoints differ"};
}

CheckResult check_cfg_schedule() {
  const auto sched = StageSchedule::uniform(4, 32, 2);
  const double expected[] = {1.0, 1.0 + 1.4 / 6.0, 1.0 + 1.4 * 2.0 / 3.0, 2.4};
  double worst = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    worst = std::max(worst, std::abs(stage_cfg_weight(3 - k, sched, 2.4) - expected[k]));
  }
  return {"cfg.stage_weights", worst <= 1e-12, "max deviation " + fmt(worst)};
}

CheckResult check_persistence(const RunConfig& config) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("pixelflow-check-" + std::to_string(config.train.seed));
  fs::create_directories(dir);
  bool ok = true;
  std::string detail;
  try {
    const auto data = gen_shapes_dataset(4, 16, 4, config.data.seed);
    save_dataset(dir / "d.pxfd", data);
    const auto back = load_dataset(dir / "d.pxfd");
    ok = back.labels == data.labels && back.class_names == data.class_names;
    for (std::size_t i = 0; ok && i < data.size(); ++i) ok = back.images[i].values == data.images[i].values;

    ModelConfig small = gradient_check_model();
    Rng rng(1);
    Checkpoint ckpt{ModelParams::init(small, rng), StageSchedule::uniform(2, 8, 2), {}, {}, 7, rng.state()};
    auto named = ckpt.params.named();
    ckpt.optimizer = OptimizerState::init(named, {});
    ckpt.ema = EmaShadow::init(named);
    save_checkpoint(dir / "c.pxfc", ckpt);
    const auto loaded = load_checkpoint(dir / "c.pxfc");
    const auto a = ckpt.params.named();
    const auto b = loaded.params.named();
    for (std::size_t i = 0; ok && i < a.size(); ++i) {
      ok = std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin());
    }
    ok = ok && loaded.step == 7 && loaded.rng_state == ckpt.rng_state;
    detail = ok ? "dataset and checkpoint round trips exact" : "round trip mismatch";
  } catch (const std::exception& e) {
    ok = false;
    detail = e.what();
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  return {"persistence.round_trip", ok, detail};
}

}  // namespace

ModelConfig gradient_check_model() {
  ModelConfig c;
  c.hidden_dim = 32;
  c.depth = 2;
  c.heads = 2;
  c.patch_size = 2;
  c.channels = 3;
  c.num_classes = 4;
  c.max_resolution = 8;
  c.mlp_ratio = 2;
  c.frequency_dim = 16;
  return c;
}

PackedBatch gradient_check_batch(const ModelConfig& config, Rng& rng) {
  const auto p = config.patch_size;
  const Image a = gaussian_image(config.channels, config.max_resolution, config.max_resolution, rng);
  const Image b = gaussian_image(config.channels, config.max_resolution / 2, config.max_resolution / 2, rng);
  std::vector<SequenceSpec> specs{{patchify(a, p), 0.8, ClassLabel{1 % config.num_classes}},
                                  {patchify(b, p), 0.3, std::nullopt}};
  return pack(specs);
}

GradientCheckReport check_backbone_gradients(const ModelConfig& config, const GradientCheckOptions& options) {
  Rng rng(options.seed);
  ModelParams params = ModelParams::init(config, rng);
  randomize_parameters(params, rng, 0.1);
  const PackedBatch batch = gradient_check_batch(config, rng);
  const Tensor target = random_tensor(batch.tokens.shape(), rng).detach();

  auto named = params.named();
  for (auto& p : named) p.tensor.zero_grad();
  packed_mse_loss(forward(params, batch), target, batch).backward();
  auto objective = [&] {
    NoGradGuard guard;
    return packed_mse_loss(forward(params, batch), target, batch).item();
  };

  GradientCheckReport report;
  std::vector<double> all_analytic, all_numeric;
  for (auto& p : named) {
    const auto n = p.tensor.numel();
    std::vector<std::size_t> elements;
    if (options.probes_per_tensor == 0 || options.probes_per_tensor >= n) {
      elements.resize(n);
      std::iota(elements.begin(), elements.end(), std::size_t{0});
    } else {
      for (std::size_t k = 0; k < options.probes_per_tensor; ++k) elements.push_back(rng.below(n));
    }
    std::vector<double> analytic;
    const auto g = p.tensor.has_grad() ? p.tensor.grad() : std::span<const double>{};
    for (auto i : elements) analytic.push_back(g.empty() ? 0.0 : g[i]);
    if (options.corrupt) options.corrupt(analytic, p.name);
    const auto numeric = finite_diff_grad_inplace(objective, p.tensor, options.h, elements);
    const auto cmp = compare_gradients(analytic, numeric);
    if (cmp.relative_error >= report.worst_tensor_error) {
      report.worst_tensor_error = cmp.relative_error;
      report.worst_tensor = p.name;
    }
    report.tensors.push_back({p.name, cmp});
    all_analytic.insert(all_analytic.end(), analytic.begin(), analytic.end());
    all_numeric.insert(all_numeric.end(), numeric.begin(), numeric.end());
    report.probes += elements.size();
  }
  report.overall = compare_gradients(all_analytic, all_numeric);
  report.passed = report.overall.passed(options.tolerance);
  return report;
}

double packing_discrepancy(const ModelParams& params, std::span<const SequenceSpec> sequences) {
  NoGradGuard guard;
  const PackedBatch packed = pack(sequences);
  const Tensor joint = forward(params, packed);
  double worst = 0.0;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const PackedBatch alone = pack(sequences.subspan(i, 1));
    const Tensor single = forward(params, alone);
    const auto rows = packed.sequence_rows(joint, i);
    worst = std::max(worst, max_abs_diff(rows.data(), single.data()));
  }
  return worst;
}

std::vector<CheckResult> run_invariant_checks(const RunConfig& config) {
  std::vector<CheckResult> out;
  Rng rng(config.train.seed);
  for (auto& r : op_gradient_checks(rng)) out.push_back(std::move(r));
  GradientCheckOptions grad;
  grad.probes_per_tensor = 24;
  grad.seed = config.train.seed;
  out.push_back(check_backbone(grad));
  out.push_back(check_euler_constant());
  out.push_back(check_dopri5_exponential());
  out.push_back(check_dopri5_polynomial());
  out.push_back(check_packing(config));
  out.push_back(check_rope_relative());
  out.push_back(check_renoise_variance());
  out.push_back(check_resample());
  out.push_back(check_schedule());
  out.push_back(check_single_stage());
  out.push_back(check_cfg_schedule());
  out.push_back(check_persistence(config));
  return out;
}

std::string format_check_report(const std::vector<CheckResult>& results) {
  std::size_t width = 0;
  for (const auto& r : results) width = std::max(width, r.name.size());
  std::ostringstream out;
  std::size_t failed = 0;
  for (const auto& r : results) {
    failed += r.passed ? 0 : 1;
    out << (r.passed ? "PASS " : "FAIL ") << r.name << std::string(width - r.name.size() + 2, ' ')
        << r.detail << "\n";
  }
  out << results.size() - failed << "/" << results.size() << " checks passed\n";
  return out.str();
}

}  // namespace pixelflow
