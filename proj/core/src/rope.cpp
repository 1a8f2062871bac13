#include "pixelflow/rope.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace pixelflow {

namespace {

void require_head_dim(std::size_t head_dim) {
  if (head_dim == 0 || head_dim % 4 != 0) {
    throw ShapeError("rope_2d: head dimension " + std::to_string(head_dim) +
                     " is not divisible by 4");
  }
}

// cos/sin of every rotation angle for one position: head_dim / 2 pairs,
// row pairs first.
void angles(GridPosition pos, std::size_t head_dim, double base, double* cs, double* sn) {
  const auto half = head_dim / 2;
  const auto pairs = half / 2;
  for (std::size_t i = 0; i < pairs; ++i) {
    const double freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(half));
    cs[i] = std::cos(pos.row * freq);
    sn[i] = std::sin(pos.row * freq);
    cs[pairs + i] = std::cos(pos.col * freq);
    sn[pairs + i] = std::sin(pos.col * freq);
  }
}

// Rotates consecutive pairs of `v` by the given angles; sign -1 rotates back.
void rotate(double* v, const double* cs, const double* sn, std::size_t pairs, double sign) {
  for (std::size_t p = 0; p < pairs; ++p) {
    const double a = v[2 * p];
    const double b = v[2 * p + 1];
    const double s = sign * sn[p];
    v[2 * p] = a * cs[p] - b * s;
    v[2 * p + 1] = a * s + b * cs[p];
  }
}

}  // namespace

void apply_rope_2d(std::span<double> head, GridPosition pos, double base) {
  require_head_dim(head.size());
  std::vector<double> cs(head.size() / 2), sn(head.size() / 2);
  angles(pos, head.size(), base, cs.data(), sn.data());
  rotate(head.data(), cs.data(), sn.data(), head.size() / 2, 1.0);
}

Tensor rope_2d(const Tensor& x, std::span<const GridPosition> positions, std::size_t heads,
               double base) {
  if (x.rank() != 2) throw ShapeError("rope_2d: expected a 2-D input, got " + shape_string(x.shape()));
  const auto n = x.dim(0);
  const auto d = x.dim(1);
  if (positions.size() != n) {
    throw ShapeError("rope_2d: " + std::to_string(positions.size()) + " positions for " +
                     std::to_string(n) + " rows");
  }
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("rope_2d: width " + std::to_string(d) + " not divisible into " +
                     std::to_string(heads) + " heads");
  }
  const auto dh = d / heads;
  require_head_dim(dh);
  const auto pairs = dh / 2;

  std::vector<double> cs(n * pairs), sn(n * pairs);
  for (std::size_t i = 0; i < n; ++i) {
    angles(positions[i], dh, base, cs.data() + i * pairs, sn.data() + i * pairs);
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t h = 0; h < heads; ++h) {
      rotate(out.data() + i * d + h * dh, cs.data() + i * pairs, sn.data() + i * pairs, pairs, 1.0);
    }
  }
  return record_op("rope_2d", x.shape(), std::move(out), {x},
                   [cs = std::move(cs), sn = std::move(sn), n, d, dh, heads,
                    pairs](const BackwardContext& ctx) {
                     std::vector<double> g(ctx.grad_out().begin(), ctx.grad_out().end());
                     for (std::size_t i = 0; i < n; ++i) {
                       for (std::size_t h = 0; h < heads; ++h) {
                         rotate(g.data() + i * d + h * dh, cs.data() + i * pairs,
                                sn.data() + i * pairs, pairs, -1.0);
                       }
                     }
                     auto gx = ctx.grad_in(0);
                     for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                   });
}

}  // namespace pixelflow
