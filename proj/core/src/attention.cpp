#include <cmath>
#include <memory>
#include <string>

#include "eigen_maps.hpp"
#include "pixelflow/ops.hpp"

namespace pixelflow::ops {

Tensor segment_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         std::span<const std::size_t> offsets, std::size_t heads) {
  if (q.rank() != 2) throw ShapeError("segment_attention: q must be 2-D, got " + shape_string(q.shape()));
  if (k.shape() != q.shape()) throw ShapeError("segment_attention", q.shape(), k.shape());
  if (v.shape() != q.shape()) throw ShapeError("segment_attention", q.shape(), v.shape());
  const auto n = q.dim(0);
  const auto d = q.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("segment_attention: width " + std::to_string(d) +
                     " not divisible into " + std::to_string(heads) + " heads");
  }
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != n) {
    throw ShapeError("segment_attention: offsets must run from 0 to " + std::to_string(n));
  }
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    if (offsets[i] <= offsets[i - 1]) {
      throw ShapeError("segment_attention: offsets must be strictly increasing");
    }
  }
  const auto dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto segments = offsets.size() - 1;

  // Softmax probabilities per (segment, head), kept for the backward pass.
  auto probs = std::make_shared<std::vector<detail::RowMatrix>>(segments * heads);
  std::vector<double> out(n * d);
  for (std::size_t s = 0; s < segments; ++s) {
    const auto o = offsets[s];
    const auto len = offsets[s + 1] - o;
    for (std::size_t h = 0; h < heads; ++h) {
      auto Q = detail::cblock(q.data().data() + o * d + h * dh, len, dh, d);
      auto K = detail::cblock(k.data().data() + o * d + h * dh, len, dh, d);
      auto V = detail::cblock(v.data().data() + o * d + h * dh, len, dh, d);
      auto& P = (*probs)[s * heads + h];
      P.noalias() = (Q * K.transpose()) * scale;
      for (Eigen::Index r = 0; r < P.rows(); ++r) {
        auto row = P.row(r);
        row = (row.array() - row.maxCoeff()).exp();
        row /= row.sum();
      }
      detail::block(out.data() + o * d + h * dh, len, dh, d).noalias() = P * V;
    }
  }

  std::vector<std::size_t> offs(offsets.begin(), offsets.end());
  return record_op(
      "segment_attention", {n, d}, std::move(out), {q, k, v},
      [q, k, v, offs = std::move(offs), probs, heads, d, dh, scale](const BackwardContext& ctx) {
        auto g = ctx.grad_out();
        auto gq = ctx.grad_in(0);
        auto gk = ctx.grad_in(1);
        auto gv = ctx.grad_in(2);
        detail::RowMatrix dP, dS;
        for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
          const auto o = offs[s];
          const auto len = offs[s + 1] - o;
          for (std::size_t h = 0; h < heads; ++h) {
            const auto at = o * d + h * dh;
            const auto& P = (*probs)[s * heads + h];
            auto dO = detail::cblock(g.data() + at, len, dh, d);
            auto Q = detail::cblock(q.data().data() + at, len, dh, d);
            auto K = detail::cblock(k.data().data() + at, len, dh, d);
            auto V = detail::cblock(v.data().data() + at, len, dh, d);
            if (!gv.empty()) detail::block(gv.data() + at, len, dh, d).noalias() += P.transpose() * dO;
            if (gq.empty() && gk.empty()) continue;
            dP.noalias() = dO * V.transpose();
            const Eigen::VectorXd rowdot = (dP.array() * P.array()).rowwise().sum();
            dS = P.array() * (dP.array().colwise() - rowdot.array());
            if (!gq.empty()) detail::block(gq.data() + at, len, dh, d).noalias() += scale * (dS * K);
            if (!gk.empty()) {
              detail::block(gk.data() + at, len, dh, d).noalias() += scale * (dS.transpose() * Q);
            }
          }
        }
      });
}

}  // namespace pixelflow::ops
