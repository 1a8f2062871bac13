#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pixelflow/checkpoint.hpp"
#include "pixelflow/dataset.hpp"

using namespace pixelflow;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("pixelflow_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

DataErrorKind load_error_kind(const fs::path& p) {
  try {
    load_dataset(p);
  } catch (const DataError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "load_dataset accepted " << p;
  return DataErrorKind::io;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.hidden_dim = 16;
  c.depth = 1;
  c.heads = 2;
  c.num_classes = 4;
  c.max_resolution = 8;
  c.mlp_ratio = 2;
  c.frequency_dim = 8;
  return c;
}

Checkpoint tiny_checkpoint() {
  Rng rng(3);
  Checkpoint ck{ModelParams::init(tiny_model(), rng), build_schedule(2, 8, 2), {}, std::nullopt, 17, "x"};
  randomize_parameters(ck.params, rng, 0.2);
  auto named = ck.params.named();
  ck.optimizer = OptimizerState::init(named, AdamWConfig{});
  ck.optimizer.step = 17;
  for (auto& m : ck.optimizer.first_moment)
    for (auto& v : m) v = rng.normal();
  for (auto& m : ck.optimizer.second_moment)
    for (auto& v : m) v = rng.uniform();
  ck.ema = EmaShadow::init(named);
  for (auto& m : ck.ema->values)
    for (auto& v : m) v += 1e-3 * rng.normal();
  Rng state(99);
  state.normal();
  ck.rng_state = state.state();
  return ck;
}

}  // namespace

TEST(Shapes, Deterministic) {
  const auto a = gen_shapes_dataset(12, 16, 8, 5);
  const auto b = gen_shapes_dataset(12, 16, 8, 5);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.images[i].values, b.images[i].values);
  EXPECT_EQ(a.labels, b.labels);
  const auto c = gen_shapes_dataset(12, 16, 8, 6);
  EXPECT_NE(a.images[0].values, c.images[0].values);
}

TEST(Shapes, RoundRobinLabels) {
  const auto d = gen_shapes_dataset(1000, 16, 8, 1);
  std::vector<int> count(8, 0);
  for (auto l : d.labels) ++count[l];
  for (int c : count) EXPECT_EQ(c, 125);
  EXPECT_EQ(d.class_names.size(), 8u);
  EXPECT_EQ(d.class_names[0], "red circle");
  EXPECT_EQ(d.class_names[5], "blue square");
}

TEST(Shapes, ValuesInRangeAndShapeVisible) {
  const auto d = gen_shapes_dataset(16, 32, 16, 2);
  for (const auto& img : d.images) {
    EXPECT_EQ(img.channels, 3u);
    EXPECT_EQ(img.height, 32u);
    double lo = 1, hi = -1;
    for (double v : img.values) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
      EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    EXPECT_GT(hi - lo, 0.3);
  }
}

TEST(Shapes, Errors) {
  EXPECT_THROW(gen_shapes_dataset(4, 24, 8, 0), std::invalid_argument);
  EXPECT_THROW(gen_shapes_dataset(4, 16, 17, 0), std::invalid_argument);
  EXPECT_THROW(gen_shapes_dataset(4, 16, 0, 0), std::invalid_argument);
}

TEST(DatasetFile, RoundTripBitExact) {
  TempDir dir;
  const auto d = gen_shapes_dataset(10, 16, 4, 8);
  save_dataset(dir / "d.pxfd", d);
  const auto back = load_dataset(dir / "d.pxfd");
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    ASSERT_EQ(back.images[i].values.size(), d.images[i].values.size());
    EXPECT_EQ(std::memcmp(back.images[i].values.data(), d.images[i].values.data(),
                          d.images[i].values.size() * sizeof(double)),
              0);
  }
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.class_names, d.class_names);
  EXPECT_EQ(back.seed, 8u);
  save_dataset(dir / "e.pxfd", back);
  EXPECT_EQ(slurp(dir / "d.pxfd"), slurp(dir / "e.pxfd"));
}

TEST(DatasetFile, HeaderLayout) {
  TempDir dir;
  save_dataset(dir / "d.pxfd", gen_shapes_dataset(2, 16, 4, 0));
  const auto bytes = slurp(dir / "d.pxfd");
  EXPECT_EQ(bytes.substr(0, 4), "PXFD");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);  // version, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);  // n
  // header 36 bytes + pixels + labels + names block
  const std::size_t pixels = 2 * 3 * 16 * 16 * 4;
  EXPECT_GT(bytes.size(), 36 + pixels + 4);
}

TEST(DatasetFile, DistinctErrors) {
  TempDir dir;
  save_dataset(dir / "d.pxfd", gen_shapes_dataset(3, 16, 4, 0));
  const auto bytes = slurp(dir / "d.pxfd");

  spit(dir / "short.pxfd", bytes.substr(0, bytes.size() / 2));
  EXPECT_EQ(load_error_kind(dir / "short.pxfd"), DataErrorKind::truncated);

  auto magic = bytes;
  magic[0] = 'Q';
  spit(dir / "magic.pxfd", magic);
  EXPECT_EQ(load_error_kind(dir / "magic.pxfd"), DataErrorKind::bad_magic);

  auto version = bytes;
  version[4] = 9;
  spit(dir / "version.pxfd", version);
  EXPECT_EQ(load_error_kind(dir / "version.pxfd"), DataErrorKind::bad_version);

  spit(dir / "long.pxfd", bytes + "zz");
  EXPECT_EQ(load_error_kind(dir / "long.pxfd"), DataErrorKind::invalid);

  EXPECT_EQ(load_error_kind(dir / "missing.pxfd"), DataErrorKind::io);
}

TEST(CheckpointFile, RoundTripBitExact) {
  TempDir dir;
  const auto ck = tiny_checkpoint();
  save_checkpoint(dir / "c.pxfc", ck);
  const auto back = load_checkpoint(dir / "c.pxfc");
  EXPECT_EQ(back.params.config, ck.params.config);
  EXPECT_EQ(back.schedule, ck.schedule);
  EXPECT_EQ(back.step, 17u);
  EXPECT_EQ(back.rng_state, ck.rng_state);
  EXPECT_EQ(back.optimizer.step, ck.optimizer.step);
  EXPECT_EQ(back.optimizer.hyper.lr, ck.optimizer.hyper.lr);
  EXPECT_EQ(back.optimizer.first_moment, ck.optimizer.first_moment);
  EXPECT_EQ(back.optimizer.second_moment, ck.optimizer.second_moment);
  ASSERT_TRUE(back.ema.has_value());
  EXPECT_EQ(back.ema->values, ck.ema->values);
  const auto a = ck.params.named(), b = back.params.named();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].tensor.shape(), b[i].tensor.shape());
    EXPECT_TRUE(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(),
                           b[i].tensor.data().begin()));
  }
  save_checkpoint(dir / "d.pxfc", back);
  EXPECT_EQ(slurp(dir / "c.pxfc"), slurp(dir / "d.pxfc"));
}

TEST(CheckpointFile, WithoutEma) {
  TempDir dir;
  auto ck = tiny_checkpoint();
  ck.ema.reset();
  save_checkpoint(dir / "c.pxfc", ck);
  EXPECT_FALSE(load_checkpoint(dir / "c.pxfc").ema.has_value());
}

TEST(CheckpointFile, ShapeMismatchNamesParameter) {
  TempDir dir;
  auto ck = tiny_checkpoint();
  ck.params.head_b = Tensor::zeros({5});
  ck.optimizer.first_moment.clear();
  ck.optimizer.second_moment.clear();
  ck.ema.reset();
  save_checkpoint(dir / "c.pxfc", ck);
  try {
    load_checkpoint(dir / "c.pxfc");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind(), DataErrorKind::invalid);
    EXPECT_NE(std::string(e.what()).find("head.bias"), std::string::npos) << e.what();
  }
}

TEST(CheckpointFile, MismatchedConfigRejected) {
  TempDir dir;
  const auto ck = tiny_checkpoint();
  save_checkpoint(dir / "c.pxfc", ck);
  auto other = tiny_model();
  other.depth = 2;
  EXPECT_THROW(load_checkpoint(dir / "c.pxfc", other, ck.schedule), DataError);
  EXPECT_THROW(load_checkpoint(dir / "c.pxfc", tiny_model(), build_schedule(1, 8, 2)), DataError);
  EXPECT_NO_THROW(load_checkpoint(dir / "c.pxfc", tiny_model(), ck.schedule));
}

TEST(CheckpointFile, CorruptFiles) {
  TempDir dir;
  save_checkpoint(dir / "c.pxfc", tiny_checkpoint());
  const auto bytes = slurp(dir / "c.pxfc");
  spit(dir / "t.pxfc", bytes.substr(0, bytes.size() - 7));
  try {
    load_checkpoint(dir / "t.pxfc");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind(), DataErrorKind::truncated);
  }
  auto magic = bytes;
  magic[1] = 'Y';
  spit(dir / "m.pxfc", magic);
  try {
    load_checkpoint(dir / "m.pxfc");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind(), DataErrorKind::bad_magic);
  }
  save_dataset(dir / "d.pxfd", gen_shapes_dataset(1, 16, 1, 0));
  EXPECT_THROW(load_checkpoint(dir / "d.pxfd"), DataError);
}

TEST(Ppm, Quantization) {
  EXPECT_EQ(quantize_pixel(-1.0), 0);
  EXPECT_EQ(quantize_pixel(1.0), 255);
  EXPECT_EQ(quantize_pixel(0.0), 128);
  EXPECT_EQ(quantize_pixel(-7.0), 0);
  EXPECT_EQ(quantize_pixel(3.0), 255);
  // (v + 1) / 2 * 255 = 63.5 rounds up.
  EXPECT_EQ(quantize_pixel(63.5 / 127.5 - 1.0), 64);
}

TEST(Ppm, Bytes) {
  Image img(3, 2, 3, -1.0);
  auto ppm = encode_ppm(img);
  const std::string header = "P6\n3 2\n255\n";
  ASSERT_EQ(ppm.size(), header.size() + 18);
  EXPECT_EQ(ppm.substr(0, header.size()), header);
  for (std::size_t i = header.size(); i < ppm.size(); ++i) EXPECT_EQ(ppm[i], '\0');

  Image white(3, 2, 3, 1.0);
  ppm = encode_ppm(white);
  for (std::size_t i = header.size(); i < ppm.size(); ++i) EXPECT_EQ(static_cast<unsigned char>(ppm[i]), 255);

  // Channel interleaving: red only at (y=1, x=2).
  Image one(3, 2, 3, -1.0);
  one.at(0, 1, 2) = 1.0;
  ppm = encode_ppm(one);
  EXPECT_EQ(static_cast<unsigned char>(ppm[header.size() + (1 * 3 + 2) * 3]), 255);
  EXPECT_EQ(static_cast<unsigned char>(ppm[header.size() + (1 * 3 + 2) * 3 + 1]), 0);

  EXPECT_THROW(encode_ppm(Image(1, 2, 2)), std::invalid_argument);
}

TEST(Ppm, WritesFile) {
  TempDir dir;
  write_ppm(Image(3, 4, 4, 0.0), dir / "a.ppm");
  const auto bytes = slurp(dir / "a.ppm");
  EXPECT_EQ(bytes.size(), std::string("P6\n4 4\n255\n").size() + 48);
  EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 128);
}
