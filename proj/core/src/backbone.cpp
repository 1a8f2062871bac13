#include "pixelflow/backbone.hpp"

#include <cmath>
#include <string>

#include "pixelflow/ops.hpp"
#include "pixelflow/rope.hpp"

namespace pixelflow {

namespace {

constexpr double kNormEps = 1e-6;
constexpr double kTimeScale = 1000.0;

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = (2.0 * rng.uniform() - 1.0) * a;
  return Tensor::from({fan_in, fan_out}, std::move(w), true);
}

Tensor normal(Shape shape, double stddev, Rng& rng) {
  std::vector<double> w(shape_numel(shape));
  for (auto& v : w) v = stddev * rng.normal();
  return Tensor::from(std::move(shape), std::move(w), true);
}

Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor copy_of(const Tensor& t) {
  return Tensor::from(t.shape(), {t.data().begin(), t.data().end()}, t.requires_grad());
}

// x * (1 + scale) + shift
Tensor modulate(const Tensor& x, const Tensor& shift, const Tensor& scale) {
  return ops::add(ops::mul(x, ops::add_scalar(scale, 1.0)), shift);
}

void require_finite(const Tensor& t, const std::string& where) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NonFiniteActivation("forward: non-finite activation " + where);
  }
}

Tensor sinusoid_rows(std::span<const double> values, std::size_t dim) {
  std::vector<double> rows;
  rows.reserve(values.size() * dim);
  for (double v : values) {
    auto e = sinusoidal_embedding(v, dim);
    rows.insert(rows.end(), e.begin(), e.end());
  }
  return Tensor::from({values.size(), dim}, std::move(rows));
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (hidden_dim == 0 || depth == 0 || heads == 0) fail("hidden_dim, depth and heads must be positive");
  if (hidden_dim % (2 * heads) != 0) fail("hidden_dim must be divisible by 2 * heads");
  if (head_dim() % 4 != 0) fail("head dimension must be divisible by 4 for 2D rotary embeddings");
  if (patch_size == 0) fail("patch_size must be at least 1");
  if (channels == 0) fail("channels must be positive");
  if (num_classes == 0) fail("num_classes must be positive");
  if (mlp_ratio == 0) fail("mlp_ratio must be positive");
  if (frequency_dim == 0 || frequency_dim % 2 != 0) fail("frequency_dim must be a positive even number");
  if (max_resolution == 0 || max_resolution % patch_size != 0) {
    fail("max_resolution must be a positive multiple of patch_size");
  }
}

ModelParams ModelParams::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  const auto d = config.hidden_dim;
  const auto f = config.frequency_dim;
  ModelParams p;
  p.config = config;
  p.patch_w = xavier(config.patch_dim(), d, rng);
  p.patch_b = zeros({d});
  p.time_w1 = normal({f, d}, 0.02, rng);
  p.time_b1 = zeros({d});
  p.time_w2 = normal({d, d}, 0.02, rng);
  p.time_b2 = zeros({d});
  p.res_w1 = normal({f, d}, 0.02, rng);
  p.res_b1 = zeros({d});
  p.res_w2 = normal({d, d}, 0.02, rng);
  p.res_b2 = zeros({d});
  p.class_table = normal({config.num_classes + 1, d}, 0.02, rng);
  const auto hidden = d * config.mlp_ratio;
  for (std::size_t i = 0; i < config.depth; ++i) {
    BlockParams b;
    b.ada_w = zeros({d, 6 * d});
    b.ada_b = zeros({6 * d});
    b.qkv_w = xavier(d, 3 * d, rng);
    b.qkv_b = zeros({3 * d});
    b.proj_w = xavier(d, d, rng);
    b.proj_b = zeros({d});
    b.fc1_w = xavier(d, hidden, rng);
    b.fc1_b = zeros({hidden});
    b.fc2_w = xavier(hidden, d, rng);
    b.fc2_b = zeros({d});
    p.blocks.push_back(std::move(b));
  }
  p.final_ada_w = zeros({d, 2 * d});
  p.final_ada_b = zeros({2 * d});
  p.head_w = zeros({d, config.patch_dim()});
  p.head_b = zeros({config.patch_dim()});
  return p;
}

std::vector<NamedTensor> ModelParams::named() const {
  std::vector<NamedTensor> out{
      {"patch.weight", patch_w},       {"patch.bias", patch_b},
      {"time.fc1.weight", time_w1},    {"time.fc1.bias", time_b1},
      {"time.fc2.weight", time_w2},    {"time.fc2.bias", time_b2},
      {"res.fc1.weight", res_w1},      {"res.fc1.bias", res_b1},
      {"res.fc2.weight", res_w2},      {"res.fc2.bias", res_b2},
      {"class.table", class_table},
  };
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    out.push_back({pre + "ada.weight", b.ada_w});
    out.push_back({pre + "ada.bias", b.ada_b});
    out.push_back({pre + "qkv.weight", b.qkv_w});
    out.push_back({pre + "qkv.bias", b.qkv_b});
    out.push_back({pre + "proj.weight", b.proj_w});
    out.push_back({pre + "proj.bias", b.proj_b});
    out.push_back({pre + "fc1.weight", b.fc1_w});
    out.push_back({pre + "fc1.bias", b.fc1_b});
    out.push_back({pre + "fc2.weight", b.fc2_w});
    out.push_back({pre + "fc2.bias", b.fc2_b});
  }
  out.push_back({"final.ada.weight", final_ada_w});
  out.push_back({"final.ada.bias", final_ada_b});
  out.push_back({"head.weight", head_w});
  out.push_back({"head.bias", head_b});
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named()) n += p.tensor.numel();
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams c = *this;
  for (Tensor* t : {&c.patch_w, &c.patch_b, &c.time_w1, &c.time_b1, &c.time_w2, &c.time_b2,
                    &c.res_w1, &c.res_b1, &c.res_w2, &c.res_b2, &c.class_table, &c.final_ada_w,
                    &c.final_ada_b, &c.head_w, &c.head_b}) {
    *t = copy_of(*t);
  }
  for (auto& b : c.blocks) {
    for (Tensor* t : {&b.ada_w, &b.ada_b, &b.qkv_w, &b.qkv_b, &b.proj_w, &b.proj_b, &b.fc1_w,
                      &b.fc1_b, &b.fc2_w, &b.fc2_b}) {
      *t = copy_of(*t);
    }
  }
  return c;
}

void randomize_parameters(ModelParams& params, Rng& rng, double stddev) {
  for (auto& p : params.named()) {
    auto w = p.tensor.mutable_data();
    for (auto& v : w) v += stddev * rng.normal();
  }
}

std::vector<double> sinusoidal_embedding(double value, std::size_t dim, double max_period) {
  const auto half = dim / 2;
  std::vector<double> out(dim, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(max_period) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::cos(value * freq);
    out[half + i] = std::sin(value * freq);
  }
  return out;
}

Tensor embed_conditioning(const ModelParams& params, std::span<const SequenceInfo> sequences) {
  const auto& cfg = params.config;
  std::vector<double> times, extents;
  std::vector<std::size_t> rows;
  for (const auto& s : sequences) {
    times.push_back(kTimeScale * s.t);
    extents.push_back(static_cast<double>(s.resolution));
    if (s.label && *s.label >= cfg.num_classes) {
      throw std::out_of_range("embed_conditioning: class " + std::to_string(*s.label) +
                              " out of range for " + std::to_string(cfg.num_classes) + " classes");
    }
    rows.push_back(s.label ? *s.label : cfg.num_classes);
  }
  auto mlp = [](const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                const Tensor& b2) {
    return ops::linear(ops::silu(ops::linear(x, w1, b1)), w2, b2);
  };
  const Tensor t_emb = mlp(sinusoid_rows(times, cfg.frequency_dim), params.time_w1,
                           params.time_b1, params.time_w2, params.time_b2);
  const Tensor r_emb = mlp(sinusoid_rows(extents, cfg.frequency_dim), params.res_w1,
                           params.res_b1, params.res_w2, params.res_b2);
  return ops::add(ops::add(t_emb, r_emb), ops::gather_rows(params.class_table, rows));
}

Tensor embed_conditioning(const ModelParams& params, double t, std::size_t resolution,
                          ClassLabel label) {
  SequenceInfo info;
  info.t = t;
  info.resolution = resolution;
  info.label = label;
  return embed_conditioning(params, std::span<const SequenceInfo>(&info, 1));
}

Tensor forward(const ModelParams& params, const PackedBatch& batch) {
  const auto& cfg = params.config;
  const auto d = cfg.hidden_dim;
  if (batch.tokens.rank() != 2 || batch.tokens.dim(1) != cfg.patch_dim()) {
    throw ShapeError("forward", batch.tokens.shape(), Shape{batch.total_tokens(), cfg.patch_dim()});
  }
  require_finite(batch.tokens, "in the input tokens");
  const auto& owner = batch.token_sequence;

  Tensor x = ops::linear(batch.tokens, params.patch_w, params.patch_b);
  const Tensor cond = ops::silu(embed_conditioning(params, batch.sequences));

  for (std::size_t k = 0; k < params.blocks.size(); ++k) {
    const auto& b = params.blocks[k];
    const Tensor mod = ops::linear(cond, b.ada_w, b.ada_b);
    auto chunk = [&](std::size_t i) {
      return ops::gather_rows(ops::slice_cols(mod, i * d, (i + 1) * d), owner);
    };

    Tensor h = modulate(ops::layer_norm(x, kNormEps), chunk(0), chunk(1));
    const Tensor qkv = ops::linear(h, b.qkv_w, b.qkv_b);
    const Tensor q = rope_2d(ops::slice_cols(qkv, 0, d), batch.positions, cfg.heads);
    const Tensor key = rope_2d(ops::slice_cols(qkv, d, 2 * d), batch.positions, cfg.heads);
    const Tensor v = ops::slice_cols(qkv, 2 * d, 3 * d);
    const Tensor attn = ops::linear(ops::segment_attention(q, key, v, batch.offsets, cfg.heads),
                                    b.proj_w, b.proj_b);
    x = ops::add(x, ops::mul(attn, chunk(2)));

    h = modulate(ops::layer_norm(x, kNormEps), chunk(3), chunk(4));
    const Tensor mlp =
        ops::linear(ops::gelu(ops::linear(h, b.fc1_w, b.fc1_b)), b.fc2_w, b.fc2_b);
    x = ops::add(x, ops::mul(mlp, chunk(5)));
    require_finite(x, "after block " + std::to_string(k));
  }

  const Tensor fmod = ops::linear(cond, params.final_ada_w, params.final_ada_b);
  const Tensor shift = ops::gather_rows(ops::slice_cols(fmod, 0, d), owner);
  const Tensor scale = ops::gather_rows(ops::slice_cols(fmod, d, 2 * d), owner);
  const Tensor out =
      ops::linear(modulate(ops::layer_norm(x, kNormEps), shift, scale), params.head_w, params.head_b);
  require_finite(out, "in the output head");
  return out;
}

std::vector<Image> unpack_images(const Tensor& tokens, const PackedBatch& batch,
                                 std::size_t patch_size) {
  if (tokens.rank() != 2 || tokens.dim(0) != batch.total_tokens()) {
    throw ShapeError("unpack_images", tokens.shape(), Shape{batch.total_tokens()});
  }
  const auto width = tokens.dim(1);
  const auto channels = width / (patch_size * patch_size);
  std::vector<Image> out;
  for (const auto& s : batch.sequences) {
    if (s.grid_h != s.grid_w) throw ShapeError("unpack_images: non-square token grid");
    out.push_back(unpatchify(tokens.data().subspan(s.offset * width, s.length * width), patch_size,
                             channels, s.grid_h * patch_size));
  }
  return out;
}

Tensor packed_mse_loss(const Tensor& pred, const Tensor& target, const PackedBatch& batch) {
  if (pred.shape() != target.shape()) throw ShapeError("packed_mse_loss", pred.shape(), target.shape());
  if (batch.sequences.size() == 1) return mse_loss(pred, target);
  std::vector<Tensor> losses;
  for (std::size_t i = 0; i < batch.sequences.size(); ++i) {
    losses.push_back(ops::reshape(
        mse_loss(batch.sequence_rows(pred, i), batch.sequence_rows(target, i)), {1}));
  }
  return ops::mean(ops::concat_rows(losses));
}

}  // namespace pixelflow
