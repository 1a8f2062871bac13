#include "pixelflow/commands.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "pixelflow/checkpoint.hpp"
#include "pixelflow/checks.hpp"
#include "pixelflow/dataset.hpp"
#include "pixelflow/sampler.hpp"
#include "pixelflow/training.hpp"

namespace pixelflow::cli {

namespace fs = std::filesystem;

void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

namespace {

std::string step_name(std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06llu.pxfc", static_cast<unsigned long long>(step));
  return buf;
}

void save_trainer(const Trainer& trainer, const fs::path& out_dir, bool keep_numbered) {
  const auto ckpt = trainer.checkpoint();
  if (keep_numbered) save_checkpoint(out_dir / step_name(ckpt.step), ckpt);
  save_checkpoint(out_dir / "latest.pxfc", ckpt);
}

}  // namespace

Dataset obtain_dataset(const RunConfig& config, std::ostream& log) {
  const auto& d = config.data;
  if (fs::exists(d.path)) return load_dataset(d.path);
  if (!d.generate) throw DataError(DataErrorKind::io, "dataset " + d.path.string() + " does not exist");
  auto data = gen_shapes_dataset(d.count, config.model.max_resolution,
                                 std::min(config.model.num_classes, kMaxShapeClasses), d.seed);
  if (d.path.has_parent_path()) fs::create_directories(d.path.parent_path());
  save_dataset(d.path, data);
  log << "generated " << data.size() << " images into " << d.path.string() << "\n";
  return data;
}

int cmd_train(const RunConfig& config, bool resume, std::ostream& out, std::ostream& err) {
  const auto& tc = config.train;
  fs::create_directories(tc.out_dir);
  Dataset data = obtain_dataset(config, out);
  const auto latest = tc.out_dir / "latest.pxfc";
  std::optional<Trainer> trainer;
  if (resume) {
    if (!fs::exists(latest)) {
      err << "train: --resume given but " << latest.string() << " does not exist\n";
      return kUsage;
    }
    const auto ckpt = load_checkpoint(latest, config.model, config.build_stage_schedule());
    trainer.emplace(config, std::move(data), ckpt);
    out << "resumed at step " << trainer->steps_done() << "\n";
  } else {
    trainer.emplace(config, std::move(data));
  }

  const auto log_path = tc.out_dir / "loss.csv";
  const bool append = resume && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) {
    err << "train: cannot write " << log_path.string() << "\n";
    return kRuntime;
  }
  if (!append) log << kLogHeader << "\n";

  const auto start = std::chrono::steady_clock::now();
  while (trainer->steps_done() < tc.steps) {
    StepResult r;
    try {
      r = trainer->step();
    } catch (const std::runtime_error& e) {
      // The trainer is left at the last good state; keep it for diagnosis.
      if (!dynamic_cast<const NonFiniteLoss*>(&e) && !dynamic_cast<const NonFiniteActivation*>(&e) &&
          !dynamic_cast<const NonFiniteGradient*>(&e)) {
        throw;
      }
      const auto diag = tc.out_dir / "diverged.pxfc";
      save_checkpoint(diag, trainer->checkpoint());
      err << "train: " << e.what() << "; state saved to " << diag.string() << "\n";
      return kRuntime;
    }
    log << format_log_row(r) << "\n";
    if (r.step % 100 == 0 || r.step == tc.steps) {
      log.flush();
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      out << "step " << r.step << "  loss " << r.loss << "  (" << secs << " s)" << std::endl;
    }
    if (tc.checkpoint_every && r.step % tc.checkpoint_every == 0) save_trainer(*trainer, tc.out_dir, true);
  }
  save_trainer(*trainer, tc.out_dir, true);
  out << "wrote " << latest.string() << "\n";
  return kOk;
}

int cmd_sample(const RunConfig& config, const fs::path& checkpoint, std::size_t label, std::size_t count,
               const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  if (label >= config.model.num_classes) {
    err << "sample: class " << label << " out of range (model has " << config.model.num_classes
        << " classes)\n";
    return kUsage;
  }
  const auto schedule = config.build_stage_schedule();
  auto ckpt = load_checkpoint(checkpoint, config.model, schedule);
  if (config.sample_ema && ckpt.ema) {
    auto named = ckpt.params.named();
    ckpt.ema->copy_to(named);
  }
  if (count == 0) return kOk;
  fs::create_directories(out_dir);
  const ModelVelocity model(ckpt.params);
  SampleConfig sc = config.sample;
  for (std::size_t i = 0; i < count; ++i) {
    sc.seed = config.sample.seed + i;
    const Image img = generate(model, label, schedule, sc, config.model.channels);
    const auto path = out_dir / ("class" + std::to_string(label) + "_seed" + std::to_string(sc.seed) + ".ppm");
    write_ppm(img, path);
    out << path.string() << "\n";
  }
  return kOk;
}

int cmd_check(const RunConfig& config, std::ostream& out) {
  const auto results = run_invariant_checks(config);
  out << format_check_report(results);
  for (const auto& r : results) {
    if (!r.passed) return kCheckFailed;
  }
  return kOk;
}

int cmd_gen_data(const RunConfig& config, const fs::path& path, std::ostream& out) {
  const auto& d = config.data;
  auto data = gen_shapes_dataset(d.count, config.model.max_resolution,
                                 std::min(config.model.num_classes, kMaxShapeClasses), d.seed);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_dataset(path, data);
  out << "wrote " << data.size() << " images to " << path.string() << "\n";
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cascaded pixel-space flow matching"};
  app.require_subcommand(1);

  std::string config_path;
  bool resume = false;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path, "Run config")->required();
  train->add_flag("--resume", resume, "Continue from <out_dir>/latest.pxfc");

  std::string ckpt_path, out_dir;
  std::size_t label = 0, count = 1;
  auto* sample = app.add_subcommand("sample", "Generate images from a checkpoint");
  sample->add_option("--config", config_path, "Run config")->required();
  sample->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  sample->add_option("--class", label, "Class label")->required();
  sample->add_option("--count", count, "Number of images")->required();
  sample->add_option("--out", out_dir, "Output directory")->required();

  auto* check = app.add_subcommand("check", "Run the invariant suite");
  check->add_option("--config", config_path, "Run config")->required();

  std::string data_out;
  auto* gen = app.add_subcommand("gen-data", "Generate a shapes dataset");
  gen->add_option("--config", config_path, "Run config")->required();
  gen->add_option("--out", data_out, "Output PXFD file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kUsage;
  }

  RunConfig config;
  try {
    config = load_run_config(config_path);
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*train) return cmd_train(config, resume, out, err);
    if (*sample) return cmd_sample(config, ckpt_path, label, count, out_dir, out, err);
    if (*check) return cmd_check(config, out);
    if (*gen) return cmd_gen_data(config, data_out, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace pixelflow::cli
