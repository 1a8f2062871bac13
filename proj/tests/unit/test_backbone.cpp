#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "pixelflow/backbone.hpp"
#include "pixelflow/ops.hpp"

using namespace pixelflow;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.hidden_dim = 32;
  c.depth = 2;
  c.heads = 2;
  c.patch_size = 2;
  c.channels = 3;
  c.num_classes = 4;
  c.max_resolution = 16;
  c.mlp_ratio = 2;
  c.frequency_dim = 16;
  return c;
}

ModelParams random_model(std::uint64_t seed) {
  Rng rng(seed);
  auto p = ModelParams::init(small_config(), rng);
  randomize_parameters(p, rng, 0.1);
  return p;
}

Image random_image(std::size_t res, Rng& rng) {
  Image img(3, res, res);
  for (auto& v : img.values) v = rng.normal();
  return img;
}

SequenceSpec spec(const Image& img, double t, ClassLabel label) {
  return {patchify(img, 2), t, label};
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

TEST(Patchify, TokenCounts) {
  Rng rng(1);
  const auto one = patchify(Image(3, 4, 4, 0.5), 4);
  EXPECT_EQ(one.tokens.dim(0), 1u);
  EXPECT_EQ(one.tokens.dim(1), 48u);
  const auto grid = patchify(random_image(32, rng), 4);
  EXPECT_EQ(grid.tokens.dim(0), 64u);
  EXPECT_EQ(grid.grid_h, 8u);
  EXPECT_EQ(grid.grid_w, 8u);
}

TEST(Patchify, RoundTrip) {
  Rng rng(2);
  const auto img = random_image(16, rng);
  for (std::size_t p : {1u, 2u, 4u}) {
    const auto back = unpatchify(patchify(img, p).tokens, p, 16);
    EXPECT_EQ(back.values, img.values);
  }
}

TEST(Patchify, OneHotLayout) {
  Image img(3, 8, 8, 0.0);
  img.at(1, 3, 2) = 1.0;
  const auto g = patchify(img, 2);
  // Token (row 1, col 1) of a 4x4 grid; inside it (py 1, px 0, c 1).
  const std::size_t token = 1 * 4 + 1, feature = (1 * 2 + 0) * 3 + 1;
  for (std::size_t i = 0; i < g.tokens.numel(); ++i) {
    EXPECT_EQ(g.tokens[i], i == token * 12 + feature ? 1.0 : 0.0);
  }
  std::vector<double> tokens(16 * 12, 0.0);
  tokens[token * 12 + feature] = 1.0;
  const auto back = unpatchify(tokens, 2, 3, 8);
  EXPECT_EQ(back.at(1, 3, 2), 1.0);
  EXPECT_EQ(std::accumulate(back.values.begin(), back.values.end(), 0.0), 1.0);
}

TEST(Patchify, Errors) {
  EXPECT_THROW(patchify(Image(3, 6, 6), 4), ShapeError);
  EXPECT_THROW(unpatchify(std::vector<double>(5 * 12, 0.0), 2, 3, 4), ShapeError);
  const auto zero = unpatchify(std::vector<double>(4 * 12, 0.0), 2, 3, 4);
  for (double v : zero.values) EXPECT_EQ(v, 0.0);
}

TEST(Rope, OriginIsIdentity) {
  std::vector<double> h = {0.3, -1.2, 2.0, 0.7, 1.1, -0.4, 0.9, 0.2};
  const auto before = h;
  apply_rope_2d(h, {0.0, 0.0});
  EXPECT_EQ(h, before);
}

TEST(Rope, HandRotation) {
  // Head dim 4: one pair per half, frequency 1.
  std::vector<double> h = {1.0, 0.0, 0.0, 1.0};
  apply_rope_2d(h, {0.5, 2.0});
  EXPECT_NEAR(h[0], std::cos(0.5), 1e-15);
  EXPECT_NEAR(h[1], std::sin(0.5), 1e-15);
  EXPECT_NEAR(h[2], -std::sin(2.0), 1e-15);
  EXPECT_NEAR(h[3], std::cos(2.0), 1e-15);
}

TEST(Rope, SecondPairFrequency) {
  // Head dim 8: second pair of each half turns at base^(-2/4) = 1/100.
  std::vector<double> h(8, 0.0);
  h[2] = 1.0;
  apply_rope_2d(h, {3.0, 0.0});
  EXPECT_NEAR(h[2], std::cos(0.03), 1e-15);
  EXPECT_NEAR(h[3], std::sin(0.03), 1e-15);
}

TEST(Rope, PreservesNormAndRelativePosition) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> q(16), k(16);
    for (auto& v : q) v = rng.normal();
    for (auto& v : k) v = rng.normal();
    const GridPosition p1{static_cast<double>(rng.below(16)), static_cast<double>(rng.below(16))};
    const GridPosition p2{static_cast<double>(rng.below(16)), static_cast<double>(rng.below(16))};
    const double dr = static_cast<double>(rng.below(32)) - 16.0;
    const double dc = static_cast<double>(rng.below(32)) - 16.0;
    auto a = q, b = k, c = q, d = k;
    apply_rope_2d(a, p1);
    apply_rope_2d(b, p2);
    apply_rope_2d(c, {p1.row + dr, p1.col + dc});
    apply_rope_2d(d, {p2.row + dr, p2.col + dc});
    EXPECT_NEAR(dot(a, b), dot(c, d), 1e-10);
    EXPECT_NEAR(std::sqrt(dot(a, a)), std::sqrt(dot(q, q)), 1e-12);
  }
}

TEST(Rope, TensorMatchesPerHead) {
  Rng rng(4);
  std::vector<double> x(3 * 16);
  for (auto& v : x) v = rng.normal();
  const std::vector<GridPosition> pos = {{0, 0}, {1, 2}, {3, 1}};
  const auto out = rope_2d(Tensor::from({3, 16}, x), pos, 2);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t h = 0; h < 2; ++h) {
      std::vector<double> head(x.begin() + r * 16 + h * 8, x.begin() + r * 16 + h * 8 + 8);
      apply_rope_2d(head, pos[r]);
      for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(out[r * 16 + h * 8 + i], head[i]);
    }
  }
}

TEST(Rope, RejectsBadHeadDim) {
  std::vector<double> h(6, 1.0);
  EXPECT_THROW(apply_rope_2d(h, {1, 1}), ShapeError);
  EXPECT_THROW(rope_2d(Tensor::zeros({2, 12}), std::vector<GridPosition>(2), 2), ShapeError);
}

TEST(Conditioning, DistinguishesInputs) {
  const auto p = random_model(5);
  const auto base = values(embed_conditioning(p, 0.4, 8, 1));
  EXPECT_NE(values(embed_conditioning(p, 0.4, 4, 1)), base);
  EXPECT_NE(values(embed_conditioning(p, 0.0, 8, 1)), values(embed_conditioning(p, 1.0, 8, 1)));
  EXPECT_NE(values(embed_conditioning(p, 0.4, 8, 2)), base);
  EXPECT_THROW(embed_conditioning(p, 0.4, 8, 4), std::out_of_range);
}

TEST(Conditioning, NullLabelUsesDedicatedRow) {
  const auto p = random_model(6);
  const auto with0 = values(embed_conditioning(p, 0.4, 8, 0));
  const auto null = values(embed_conditioning(p, 0.4, 8, std::nullopt));
  const auto table = p.class_table.data();
  const std::size_t d = 32, null_row = 4;
  for (std::size_t i = 0; i < d; ++i) {
    EXPECT_NEAR(null[i] - with0[i], table[null_row * d + i] - table[i], 1e-12);
  }
}

TEST(Sinusoid, Layout) {
  const auto e = sinusoidal_embedding(2.0, 8);
  for (std::size_t i = 0; i < 4; ++i) {
    const double f = std::pow(10000.0, -static_cast<double>(i) / 4.0);
    EXPECT_NEAR(e[i], std::cos(2.0 * f), 1e-14);
    EXPECT_NEAR(e[4 + i], std::sin(2.0 * f), 1e-14);
  }
}

TEST(Pack, Layout) {
  Rng rng(7);
  const std::vector<SequenceSpec> one = {spec(random_image(4, rng), 0.2, 1)};
  const auto single = pack(one);
  for (auto m : single.dense_mask()) EXPECT_EQ(m, 1);

  const std::vector<SequenceSpec> two = {spec(random_image(4, rng), 0.2, 1),
                                         spec(random_image(6, rng), 0.7, std::nullopt)};
  const auto b = pack(two);
  ASSERT_EQ(b.total_tokens(), 13u);
  EXPECT_EQ(b.offsets, (std::vector<std::size_t>{0, 4, 13}));
  const auto mask = b.dense_mask();
  for (std::size_t i = 0; i < 13; ++i) {
    for (std::size_t j = 0; j < 13; ++j) {
      EXPECT_EQ(mask[i * 13 + j], (i < 4) == (j < 4) ? 1 : 0);
    }
  }
  EXPECT_EQ(b.sequences[1].resolution, 3u);
  EXPECT_EQ(b.positions[4 + 5].row, 1.0);
  EXPECT_EQ(b.positions[4 + 5].col, 2.0);
  EXPECT_THROW(pack(std::vector<SequenceSpec>{}), std::invalid_argument);
}

TEST(Forward, ZeroInitPredictsZero) {
  Rng rng(8);
  const auto p = ModelParams::init(small_config(), rng);
  const std::vector<SequenceSpec> seqs = {spec(random_image(8, rng), 0.3, 2),
                                          spec(random_image(16, rng), 0.9, std::nullopt)};
  const auto out = forward(p, pack(seqs));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, PackedEqualsSeparate) {
  const auto p = random_model(9);
  Rng rng(10);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<SequenceSpec> seqs;
    for (std::size_t res : {8u, 16u, 4u}) {
      const ClassLabel label = rng.uniform() < 0.3 ? ClassLabel{} : ClassLabel{rng.below(4)};
      seqs.push_back(spec(random_image(res, rng), rng.uniform(), label));
    }
    const auto batch = pack(seqs);
    const auto packed = forward(p, batch);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const auto alone = forward(p, pack(std::span(&seqs[i], 1)));
      const auto rows = batch.sequence_rows(packed, i);
      ASSERT_EQ(rows.shape(), alone.shape());
      for (std::size_t j = 0; j < alone.numel(); ++j) EXPECT_NEAR(rows[j], alone[j], 1e-10);
    }
  }
}

TEST(Forward, PermutingSequencesPermutesOutputs) {
  const auto p = random_model(11);
  Rng rng(12);
  const std::vector<SequenceSpec> ab = {spec(random_image(8, rng), 0.1, 0),
                                        spec(random_image(4, rng), 0.6, 3)};
  const std::vector<SequenceSpec> ba = {ab[1], ab[0]};
  const auto b1 = pack(ab), b2 = pack(ba);
  const auto o1 = forward(p, b1), o2 = forward(p, b2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto x = b1.sequence_rows(o1, i), y = b2.sequence_rows(o2, 1 - i);
    for (std::size_t j = 0; j < x.numel(); ++j) EXPECT_NEAR(x[j], y[j], 1e-12);
  }
}

TEST(Forward, OutputUnpacksToInputResolutions) {
  const auto p = random_model(13);
  Rng rng(14);
  const std::vector<SequenceSpec> seqs = {spec(random_image(16, rng), 0.5, 1),
                                          spec(random_image(8, rng), 0.2, 0),
                                          spec(random_image(4, rng), 0.0, std::nullopt)};
  const auto batch = pack(seqs);
  const auto images = unpack_images(forward(p, batch), batch, 2);
  ASSERT_EQ(images.size(), 3u);
  EXPECT_EQ(images[0].height, 16u);
  EXPECT_EQ(images[1].height, 8u);
  EXPECT_EQ(images[2].width, 4u);
  for (const auto& im : images) EXPECT_EQ(im.channels, 3u);
}

TEST(Forward, RejectsNonFiniteInput) {
  const auto p = random_model(15);
  Image img(3, 4, 4, 0.0);
  img.values[5] = std::nan("");
  const std::vector<SequenceSpec> seqs = {spec(img, 0.5, 1)};
  EXPECT_THROW(forward(p, pack(seqs)), NonFiniteActivation);
}

TEST(Loss, PackedMseAveragesSequences) {
  Rng rng(16);
  const std::vector<SequenceSpec> seqs = {spec(random_image(4, rng), 0.5, 1),
                                          spec(random_image(8, rng), 0.5, 1)};
  const auto batch = pack(seqs);
  std::vector<double> pred(batch.tokens.numel()), target(batch.tokens.numel());
  for (auto& v : pred) v = rng.normal();
  for (auto& v : target) v = rng.normal();
  const Shape shape = batch.tokens.shape();
  const auto loss = packed_mse_loss(Tensor::from(shape, pred), Tensor::from(shape, target), batch);
  const std::size_t width = shape[1];
  double expected = 0;
  for (std::size_t s = 0; s < 2; ++s) {
    double acc = 0;
    const auto lo = batch.offsets[s] * width, hi = batch.offsets[s + 1] * width;
    for (std::size_t i = lo; i < hi; ++i) acc += (pred[i] - target[i]) * (pred[i] - target[i]);
    expected += acc / static_cast<double>(hi - lo) / 2.0;
  }
  EXPECT_NEAR(loss.item(), expected, 1e-13);
}

TEST(Params, InitShapesAndCount) {
  Rng rng(17);
  const auto p = ModelParams::init(small_config(), rng);
  std::size_t total = 0;
  for (const auto& t : p.named()) total += t.tensor.numel();
  EXPECT_EQ(total, p.parameter_count());
  EXPECT_EQ(p.class_table.dim(0), 5u);
  for (double v : p.head_w.data()) EXPECT_EQ(v, 0.0);
  auto bad = small_config();
  bad.hidden_dim = 30;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Params, CloneIsDeep) {
  const auto p = random_model(18);
  auto c = p.clone();
  c.head_w.mutable_data()[0] += 1.0;
  EXPECT_NE(c.head_w[0], p.head_w[0]);
}
