#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "pixelflow/checks.hpp"
#include "pixelflow/commands.hpp"

using namespace pixelflow;
namespace fs = std::filesystem;

namespace {

struct Invocation {
  int code = -1;
  std::string out, err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "pixelflow");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Invocation r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tiny_config_text(std::size_t stages) {
  return "[model]\nhidden_dim = 32\ndepth = 1\nheads = 2\nnum_classes = 4\nresolution = 16\n"
         "mlp_ratio = 2\nfrequency_dim = 16\n"
         "[schedule]\nstages = " + std::to_string(stages) + "\n"
         "[train]\nsteps = 4\nlr = 1e-3\ncheckpoint_every = 2\nout_dir = run\n"
         "[data]\npath = run/shapes.pxfd\ncount = 4\n"
         "[sample]\nsteps_per_stage = 3\ncfg_max = 1.5\n";
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pixelflow_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(invoke({}).code, cli::kUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"train"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"train", "--config", (dir_ / "missing.cfg").string()}).code, cli::kUsage);
  const auto bad = write_config("bad.cfg", "[model]\ndepthh = 3\n");
  const auto r = invoke({"check", "--config", bad.string()});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  EXPECT_EQ(invoke({"--help"}).code, cli::kOk);
}

TEST_F(CliTest, TrainResumeAndSample) {
  const auto cfg = write_config("tiny.cfg", tiny_config_text(2));
  auto r = invoke({"train", "--config", cfg.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto run = dir_ / "run";
  EXPECT_TRUE(fs::exists(run / "shapes.pxfd"));
  EXPECT_TRUE(fs::exists(run / "step_000002.pxfc"));
  EXPECT_TRUE(fs::exists(run / "latest.pxfc"));
  const auto log = slurp(run / "loss.csv");
  EXPECT_EQ(log.substr(0, log.find('\n')), "step,loss,stage_mix");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 5);

  // Re-running from scratch reproduces the log exactly.
  fs::copy_file(run / "loss.csv", dir_ / "first.csv");
  ASSERT_EQ(invoke({"train", "--config", cfg.string()}).code, cli::kOk);
  EXPECT_EQ(slurp(run / "loss.csv"), slurp(dir_ / "first.csv"));

  // Extending with --resume appends rows for the new steps only.
  const auto longer = write_config("longer.cfg", std::string(tiny_config_text(2)).replace(
                                                     tiny_config_text(2).find("steps = 4"), 9, "steps = 6"));
  r = invoke({"train", "--config", longer.string(), "--resume"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto resumed = slurp(run / "loss.csv");
  EXPECT_EQ(resumed.substr(0, log.size()), log);
  EXPECT_EQ(std::count(resumed.begin(), resumed.end(), '\n'), 7);

  const auto ckpt = (run / "latest.pxfc").string();
  const auto a = dir_ / "a", b = dir_ / "b";
  r = invoke({"sample", "--config", cfg.string(), "--ckpt", ckpt, "--class", "2", "--count", "2", "--out", a.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  ASSERT_EQ(invoke({"sample", "--config", cfg.string(), "--ckpt", ckpt, "--class", "2", "--count", "2",
                    "--out", b.string()}).code,
            cli::kOk);
  for (const char* name : {"class2_seed0.ppm", "class2_seed1.ppm"}) {
    ASSERT_TRUE(fs::exists(a / name)) << name;
    EXPECT_EQ(slurp(a / name), slurp(b / name));
    EXPECT_EQ(slurp(a / name).substr(0, 13), "P6\n16 16\n255\n");
  }
  EXPECT_NE(slurp(a / "class2_seed0.ppm"), slurp(a / "class2_seed1.ppm"));

  const auto none = dir_ / "none";
  EXPECT_EQ(invoke({"sample", "--config", cfg.string(), "--ckpt", ckpt, "--class", "1", "--count", "0",
                    "--out", none.string()}).code,
            cli::kOk);
  EXPECT_FALSE(fs::exists(none) && !fs::is_empty(none));

  EXPECT_EQ(invoke({"sample", "--config", cfg.string(), "--ckpt", ckpt, "--class", "4", "--count", "1",
                    "--out", a.string()}).code,
            cli::kUsage);
  EXPECT_EQ(invoke({"sample", "--config", cfg.string(), "--ckpt", (dir_ / "nope.pxfc").string(), "--class",
                    "0", "--count", "1", "--out", a.string()}).code,
            cli::kRuntime);

  // A checkpoint from the two-stage run does not fit a one-stage config.
  const auto single = write_config("single.cfg", tiny_config_text(1));
  EXPECT_EQ(invoke({"sample", "--config", single.string(), "--ckpt", ckpt, "--class", "0", "--count", "1",
                    "--out", a.string()}).code,
            cli::kRuntime);
}

TEST_F(CliTest, ResumeWithoutCheckpointIsUsageError) {
  const auto cfg = write_config("tiny.cfg", tiny_config_text(2));
  EXPECT_EQ(invoke({"train", "--config", cfg.string(), "--resume"}).code, cli::kUsage);
}

TEST_F(CliTest, SingleStageSamplesHaveTargetResolution) {
  const auto cfg = write_config("single.cfg", tiny_config_text(1));
  ASSERT_EQ(invoke({"train", "--config", cfg.string()}).code, cli::kOk);
  const auto out = dir_ / "s";
  ASSERT_EQ(invoke({"sample", "--config", cfg.string(), "--ckpt", (dir_ / "run" / "latest.pxfc").string(),
                    "--class", "0", "--count", "1", "--out", out.string()}).code,
            cli::kOk);
  const auto ppm = slurp(out / "class0_seed0.ppm");
  EXPECT_EQ(ppm.substr(0, 12), "P6\n16 16\n255");
  EXPECT_EQ(ppm.size(), std::string("P6\n16 16\n255\n").size() + 16 * 16 * 3);
}

TEST_F(CliTest, GenData) {
  const auto cfg = write_config("tiny.cfg", tiny_config_text(2));
  const auto path = dir_ / "sub" / "d.pxfd";
  ASSERT_EQ(invoke({"gen-data", "--config", cfg.string(), "--out", path.string()}).code, cli::kOk);
  const auto d = load_dataset(path);
  EXPECT_EQ(d.size(), 4u);
  EXPECT_EQ(d.resolution, 16u);
}

TEST_F(CliTest, CheckReportsEveryCheckOnce) {
  const auto cfg = write_config("tiny.cfg", tiny_config_text(2));
  const auto r = invoke({"check", "--config", cfg.string()});
  EXPECT_EQ(r.code, cli::kOk) << r.out;
  std::istringstream lines(r.out);
  std::string line;
  std::set<std::string> names;
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("PASS ", 0) != 0 && line.rfind("FAIL ", 0) != 0) continue;
    ++rows;
    std::istringstream fields(line.substr(5));
    std::string name;
    fields >> name;
    names.insert(name);
  }
  EXPECT_GE(rows, 20u);
  EXPECT_EQ(names.size(), rows);
  EXPECT_TRUE(names.count("grad.backbone"));
  EXPECT_TRUE(names.count("packing.equivalence"));
  EXPECT_TRUE(names.count("renoise.variance"));
}

TEST(GradientHarness, NegatedGradientFails) {
  GradientCheckOptions opts;
  opts.probes_per_tensor = 4;
  const auto clean = check_backbone_gradients(gradient_check_model(), opts);
  EXPECT_TRUE(clean.passed);
  opts.corrupt = [](std::vector<double>& g, const std::string& name) {
    if (name.find("qkv.weight") != std::string::npos) {
      for (auto& v : g) v = -v;
    }
  };
  const auto broken = check_backbone_gradients(gradient_check_model(), opts);
  EXPECT_FALSE(broken.passed);
  EXPECT_NE(broken.worst_tensor.find("qkv.weight"), std::string::npos);
  EXPECT_GT(broken.worst_tensor_error, 0.5);
}
