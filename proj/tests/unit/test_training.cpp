#include <gtest/gtest.h>

#include <numeric>

#include "pixelflow/training.hpp"

using namespace pixelflow;

namespace {

RunConfig tiny_run() {
  RunConfig c;
  c.model.hidden_dim = 32;
  c.model.depth = 2;
  c.model.heads = 2;
  c.model.num_classes = 4;
  c.model.max_resolution = 16;
  c.model.mlp_ratio = 2;
  c.model.frequency_dim = 16;
  c.train.optimizer.lr = 1e-3;
  c.train.seed = 4;
  c.data.count = 4;
  c.validate();
  return c;
}

Dataset tiny_data() { return gen_shapes_dataset(4, 16, 4, 0); }

bool same_values(const ModelParams& a, const ModelParams& b) {
  const auto x = a.named(), y = b.named();
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::equal(x[i].tensor.data().begin(), x[i].tensor.data().end(), y[i].tensor.data().begin(),
                    y[i].tensor.data().end())) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST(Batch, OneSequencePerIndexAtStageResolution) {
  const auto data = tiny_data();
  const auto sched = build_schedule(2, 16, 2);
  Rng rng(1);
  const std::vector<std::size_t> idx = {0, 1, 2, 3, 0, 1};
  const auto tb = assemble_batch(data, idx, sched, rng, 0.0);
  ASSERT_EQ(tb.batch.sequences.size(), 6u);
  EXPECT_EQ(std::accumulate(tb.stage_counts.begin(), tb.stage_counts.end(), std::size_t{0}), 6u);
  EXPECT_EQ(tb.targets.shape(), tb.batch.tokens.shape());
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& s = tb.batch.sequences[i];
    EXPECT_TRUE(s.grid_h == 8 || s.grid_h == 4);
    EXPECT_EQ(s.label, ClassLabel{data.labels[idx[i]]});
  }
}

TEST(LogRow, Format) {
  StepResult r{12, 0.125, {3, 5}};
  EXPECT_EQ(format_log_row(r), "12,0.125,3/5");
  EXPECT_EQ(std::string(kLogHeader), "step,loss,stage_mix");
}

TEST(Trainer, FirstLossIsMeanSquaredTarget) {
  const auto cfg = tiny_run();
  const auto data = tiny_data();
  // Reproduce the first batch the trainer will draw.
  Rng rng = Rng::derive(cfg.train.seed, 1);
  const std::vector<std::size_t> idx = {0, 1, 2, 3};
  const auto tb = assemble_batch(data, idx, cfg.build_stage_schedule(), rng, cfg.train.p_drop);
  double expected = 0;
  const auto width = tb.targets.dim(1);
  for (std::size_t s = 0; s < 4; ++s) {
    double acc = 0;
    const auto lo = tb.batch.offsets[s] * width, hi = tb.batch.offsets[s + 1] * width;
    for (std::size_t i = lo; i < hi; ++i) acc += tb.targets[i] * tb.targets[i];
    expected += acc / static_cast<double>(hi - lo) / 4.0;
  }
  Trainer t(cfg, data);
  const auto r = t.step();
  EXPECT_EQ(r.step, 1u);
  EXPECT_NEAR(r.loss, expected, 1e-10);
  EXPECT_EQ(r.stage_counts, tb.stage_counts);
}

TEST(Trainer, DeterministicAcrossInstances) {
  Trainer a(tiny_run(), tiny_data()), b(tiny_run(), tiny_data());
  for (int i = 0; i < 3; ++i) EXPECT_EQ(format_log_row(a.step()), format_log_row(b.step()));
  EXPECT_TRUE(same_values(a.params(), b.params()));
}

TEST(Trainer, ResumeMatchesUninterrupted) {
  const auto cfg = tiny_run();
  Trainer full(cfg, tiny_data());
  std::vector<std::string> rows;
  for (int i = 0; i < 6; ++i) rows.push_back(format_log_row(full.step()));

  Trainer first(cfg, tiny_data());
  for (int i = 0; i < 3; ++i) EXPECT_EQ(format_log_row(first.step()), rows[i]);
  const auto path = std::filesystem::temp_directory_path() / "pixelflow_resume_test.pxfc";
  save_checkpoint(path, first.checkpoint());
  const auto ck = load_checkpoint(path);
  std::filesystem::remove(path);

  Trainer second(cfg, tiny_data(), ck);
  EXPECT_EQ(second.steps_done(), 3u);
  for (int i = 3; i < 6; ++i) EXPECT_EQ(format_log_row(second.step()), rows[i]);
  EXPECT_TRUE(same_values(second.params(), full.params()));
  EXPECT_TRUE(same_values(second.ema_params(), full.ema_params()));
}

TEST(Trainer, ResumeRejectsOtherModel) {
  Trainer t(tiny_run(), tiny_data());
  t.step();
  auto other = tiny_run();
  other.model.depth = 1;
  EXPECT_ANY_THROW(Trainer(other, tiny_data(), t.checkpoint()));
}

TEST(Trainer, EmaWarmup) {
  EXPECT_EQ(ema_decay_at(0.999, 0), 0.1);
  EXPECT_EQ(ema_decay_at(0.999, 10), 11.0 / 20.0);
  EXPECT_EQ(ema_decay_at(0.999, 100000), 0.999);
  EXPECT_EQ(ema_decay_at(0.0, 5), 0.0);
}

TEST(Trainer, BatchSizeWrapsDataset) {
  auto cfg = tiny_run();
  cfg.train.batch_size = 3;
  Trainer t(cfg, tiny_data());
  for (int i = 0; i < 3; ++i) {
    const auto r = t.step();
    EXPECT_EQ(std::accumulate(r.stage_counts.begin(), r.stage_counts.end(), std::size_t{0}), 3u);
  }
}

TEST(Trainer, EmaLagsRawWeights) {
  auto cfg = tiny_run();
  cfg.train.ema_decay = 0.9;
  Trainer t(cfg, tiny_data());
  const auto before = t.params().clone();
  t.step();
  // First update uses the warm-up decay min(0.9, 1/10).
  const double d = ema_decay_at(0.9, 0);
  EXPECT_DOUBLE_EQ(d, 0.1);
  const auto raw = t.params().named(), ema = t.ema_params().named(), init = before.named();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    for (std::size_t j = 0; j < raw[i].tensor.numel(); ++j) {
      EXPECT_NEAR(ema[i].tensor[j], d * init[i].tensor[j] + (1 - d) * raw[i].tensor[j], 1e-15);
    }
  }
}

TEST(Trainer, LossFallsOnTinyOverfit) {
  auto cfg = tiny_run();
  cfg.train.p_drop = 0.0;
  cfg.train.optimizer.lr = 3e-3;
  Trainer t(cfg, gen_shapes_dataset(2, 16, 4, 0));
  double first = 0, last = 0;
  for (int i = 0; i < 150; ++i) {
    const double l = t.step().loss;
    if (i < 20) first += l;
    if (i >= 130) last += l;
  }
  EXPECT_LT(last, 0.6 * first);
}
