#include "pixelflow/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "eigen_maps.hpp"

namespace pixelflow::ops {

namespace {

// Number of leading repetitions of `b` inside `a`, or throws.
std::size_t broadcast_reps(std::string_view op, const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sb.size() > sa.size() ||
      !std::equal(sb.begin(), sb.end(), sa.end() - static_cast<std::ptrdiff_t>(sb.size()))) {
    throw ShapeError(op, sa, sb);
  }
  return b.numel() == 0 ? 0 : a.numel() / b.numel();
}

void require_rank(std::string_view op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_string(a.shape()));
  }
}

template <typename F, typename D>
Tensor unary(std::string_view op, const Tensor& a, F f, D dfdx) {
  auto x = a.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return record_op(op, a.shape(), std::move(y), {a},
                   [a, dfdx](const BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     auto x = a.data();
                     auto gx = ctx.grad_in(0);
                     for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(x[i]);
                   });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto reps = broadcast_reps("add", a, b);
  const auto block = b.numel();
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0, i = 0; r < reps; ++r) {
    for (std::size_t j = 0; j < block; ++j, ++i) out[i] = x[i] + y[j];
  }
  return record_op("add", a.shape(), std::move(out), {a, b},
                   [reps, block](const BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     if (auto ga = ctx.grad_in(0); !ga.empty()) {
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     }
                     if (auto gb = ctx.grad_in(1); !gb.empty()) {
                       for (std::size_t r = 0, i = 0; r < reps; ++r) {
                         for (std::size_t j = 0; j < block; ++j, ++i) gb[j] += g[i];
                       }
                     }
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto reps = broadcast_reps("sub", a, b);
  const auto block = b.numel();
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0, i = 0; r < reps; ++r) {
    for (std::size_t j = 0; j < block; ++j, ++i) out[i] = x[i] - y[j];
  }
  return record_op("sub", a.shape(), std::move(out), {a, b},
                   [reps, block](const BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     if (auto ga = ctx.grad_in(0); !ga.empty()) {
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     }
                     if (auto gb = ctx.grad_in(1); !gb.empty()) {
                       for (std::size_t r = 0, i = 0; r < reps; ++r) {
                         for (std::size_t j = 0; j < block; ++j, ++i) gb[j] -= g[i];
                       }
                     }
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto reps = broadcast_reps("mul", a, b);
  const auto block = b.numel();
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0, i = 0; r < reps; ++r) {
    for (std::size_t j = 0; j < block; ++j, ++i) out[i] = x[i] * y[j];
  }
  return record_op("mul", a.shape(), std::move(out), {a, b},
                   [a, b, reps, block](const BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     auto x = a.data();
                     auto y = b.data();
                     if (auto ga = ctx.grad_in(0); !ga.empty()) {
                       for (std::size_t r = 0, i = 0; r < reps; ++r) {
                         for (std::size_t j = 0; j < block; ++j, ++i) ga[i] += g[i] * y[j];
                       }
                     }
                     if (auto gb = ctx.grad_in(1); !gb.empty()) {
                       for (std::size_t r = 0, i = 0; r < reps; ++r) {
                         for (std::size_t j = 0; j < block; ++j, ++i) gb[j] += g[i] * x[i];
                       }
                     }
                   });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      "add_scalar", a, [value](double x) { return x + value; },
      [](double) { return 1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul", a.shape(), b.shape());
  std::vector<double> out(m * n);
  detail::mat(out, m, n).noalias() = detail::cmat(a.data(), m, k) * detail::cmat(b.data(), k, n);
  return record_op("matmul", {m, n}, std::move(out), {a, b},
                   [a, b, m, k, n](const BackwardContext& ctx) {
                     auto g = detail::cmat(ctx.grad_out(), m, n);
                     if (auto ga = ctx.grad_in(0); !ga.empty()) {
                       detail::mat(ga, m, k).noalias() +=
                           g * detail::cmat(b.data(), k, n).transpose();
                     }
                     if (auto gb = ctx.grad_in(1); !gb.empty()) {
                       detail::mat(gb, k, n).noalias() +=
                           detail::cmat(a.data(), m, k).transpose() * g;
                     }
                   });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank("linear", x, 2);
  require_rank("linear", w, 2);
  const auto m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k) throw ShapeError("linear", x.shape(), w.shape());
  if (bias.shape() != Shape{n}) throw ShapeError("linear", w.shape(), bias.shape());
  std::vector<double> out(m * n);
  auto y = detail::mat(out, m, n);
  y.noalias() = detail::cmat(x.data(), m, k) * detail::cmat(w.data(), k, n);
  y.rowwise() += detail::crow(bias.data());
  return record_op("linear", {m, n}, std::move(out), {x, w, bias},
                   [x, w, m, k, n](const BackwardContext& ctx) {
                     auto g = detail::cmat(ctx.grad_out(), m, n);
                     if (auto gx = ctx.grad_in(0); !gx.empty()) {
                       detail::mat(gx, m, k).noalias() +=
                           g * detail::cmat(w.data(), k, n).transpose();
                     }
                     if (auto gw = ctx.grad_in(1); !gw.empty()) {
                       detail::mat(gw, k, n).noalias() +=
                           detail::cmat(x.data(), m, k).transpose() * g;
                     }
                     // Plain row loop: Eigen's colwise redux peels columns by
                     // address alignment, which makes the sum order vary.
                     if (auto gb = ctx.grad_in(2); !gb.empty()) {
                       const double* gp = ctx.grad_out().data();
                       for (std::size_t r = 0; r < m; ++r)
                         for (std::size_t j = 0; j < n; ++j) gb[j] += gp[r * n + j];
                     }
                   });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const auto m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  detail::mat(out, n, m) = detail::cmat(a.data(), m, n).transpose();
  return record_op("transpose", {n, m}, std::move(out), {a},
                   [m, n](const BackwardContext& ctx) {
                     auto ga = ctx.grad_in(0);
                     detail::mat(ga, m, n) += detail::cmat(ctx.grad_out(), n, m).transpose();
                   });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) throw ShapeError("reshape", a.shape(), shape);
  std::vector<double> out(a.data().begin(), a.data().end());
  return record_op("reshape", std::move(shape), std::move(out), {a},
                   [](const BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     auto ga = ctx.grad_in(0);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || begin > end || end > a.dim(0)) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for " + shape_string(a.shape()));
  }
  const auto row = a.dim(0) == 0 ? 0 : a.numel() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = end - begin;
  auto src = a.data().subspan(begin * row, (end - begin) * row);
  std::vector<double> out(src.begin(), src.end());
  return record_op("slice_rows", std::move(shape), std::move(out), {a},
                   [begin, row](const BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     auto ga = ctx.grad_in(0).subspan(begin * row, g.size());
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", a, 2);
  const auto m = a.dim(0), n = a.dim(1);
  if (begin > end || end > n) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for " + shape_string(a.shape()));
  }
  const auto w = end - begin;
  std::vector<double> out(m * w);
  auto x = a.data();
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(r * n + begin), w,
                out.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  return record_op("slice_cols", {m, w}, std::move(out), {a},
                   [m, n, w, begin](const BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     auto ga = ctx.grad_in(0);
                     for (std::size_t r = 0; r < m; ++r) {
                       for (std::size_t c = 0; c < w; ++c) ga[r * n + begin + c] += g[r * w + c];
                     }
                   });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<std::size_t> starts;
  for (const auto& p : parts) {
    if (p.rank() == 0 || !std::equal(tail.begin(), tail.end(), p.shape().begin() + 1,
                                     p.shape().end())) {
      throw ShapeError("concat_rows", parts[0].shape(), p.shape());
    }
    starts.push_back(rows * shape_numel(tail));
    rows += p.dim(0);
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  std::vector<double> out;
  out.reserve(shape_numel(shape));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return record_op("concat_rows", std::move(shape), std::move(out), inputs,
                   [starts](const BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     for (std::size_t p = 0; p < starts.size(); ++p) {
                       auto gp = ctx.grad_in(p);
                       for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[starts[p] + i];
                     }
                   });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  if (a.rank() == 0) throw ShapeError("gather_rows: scalar input");
  const auto rows = a.dim(0);
  const auto row = rows == 0 ? 0 : a.numel() / rows;
  Shape shape = a.shape();
  shape[0] = index.size();
  std::vector<double> out(index.size() * row);
  auto x = a.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) +
                       " out of range for " + shape_string(a.shape()));
    }
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(index[i] * row), row,
                out.begin() + static_cast<std::ptrdiff_t>(i * row));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return record_op("gather_rows", std::move(shape), std::move(out), {a},
                   [idx = std::move(idx), row](const BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     auto ga = ctx.grad_in(0);
                     for (std::size_t i = 0; i < idx.size(); ++i) {
                       for (std::size_t j = 0; j < row; ++j) ga[idx[i] * row + j] += g[i * row + j];
                     }
                   });
}

Tensor softmax(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("softmax: scalar input");
  const auto n = a.shape().back();
  const auto rows = n == 0 ? 0 : a.numel() / n;
  auto x = a.data();
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const auto* xr = x.data() + r * n;
    auto* yr = y.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yr[j] /= s;
  }
  return record_op("softmax", a.shape(), std::move(y), {a},
                   [rows, n](const BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     auto y = ctx.value_out();
                     auto ga = ctx.grad_in(0);
                     for (std::size_t r = 0; r < rows; ++r) {
                       double dot = 0.0;
                       for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
                       for (std::size_t j = 0; j < n; ++j) {
                         ga[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
                       }
                     }
                   });
}

Tensor layer_norm(const Tensor& a, double eps) {
  if (a.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const auto n = a.shape().back();
  const auto rows = n == 0 ? 0 : a.numel() / n;
  auto x = a.data();
  std::vector<double> y(x.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto* xr = x.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    // A constant row with eps = 0 has no scale; it maps to zeros.
    const double denom = std::sqrt(var + eps);
    rstd[r] = denom > 0.0 ? 1.0 / denom : 0.0;
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = (xr[j] - mu) * rstd[r];
  }
  return record_op("layer_norm", a.shape(), std::move(y), {a},
                   [rows, n, rstd = std::move(rstd)](const BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     auto y = ctx.value_out();
                     auto ga = ctx.grad_in(0);
                     const double inv_n = 1.0 / static_cast<double>(n);
                     for (std::size_t r = 0; r < rows; ++r) {
                       double mg = 0.0, mgy = 0.0;
                       for (std::size_t j = 0; j < n; ++j) {
                         mg += g[r * n + j];
                         mgy += g[r * n + j] * y[r * n + j];
                       }
                       mg *= inv_n;
                       mgy *= inv_n;
                       for (std::size_t j = 0; j < n; ++j) {
                         ga[r * n + j] += rstd[r] * (g[r * n + j] - mg - y[r * n + j] * mgy);
                       }
                     }
                   });
}

Tensor gelu(const Tensor& a) {
  static constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double k = 0.044715;
  const auto n = static_cast<Eigen::Index>(a.numel());
  const Eigen::Map<const Eigen::ArrayXd> x(a.data().data(), n);
  // tanh(u) = sign(u) (1 - e) / (1 + e) with e = exp(-2|u|); Eigen
  // vectorizes exp but not tanh. Absolute error stays near 1e-16.
  const Eigen::ArrayXd u = c * (x + k * x.cube());
  const Eigen::ArrayXd e = (-2.0 * u.abs()).exp();
  auto t = std::make_shared<Eigen::ArrayXd>((1.0 - e) / (1.0 + e) * u.sign());
  std::vector<double> y(a.numel());
  Eigen::Map<Eigen::ArrayXd>(y.data(), n) = 0.5 * x * (1.0 + *t);
  return record_op("gelu", a.shape(), std::move(y), {a}, [a, t](const BackwardContext& ctx) {
    const auto n = static_cast<Eigen::Index>(a.numel());
    const Eigen::Map<const Eigen::ArrayXd> x(a.data().data(), n);
    const Eigen::Map<const Eigen::ArrayXd> g(ctx.grad_out().data(), n);
    Eigen::Map<Eigen::ArrayXd> gx(ctx.grad_in(0).data(), n);
    const auto& th = *t;
    gx += g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * c * (1.0 + 3.0 * k * x.square()));
  });
}

Tensor silu(const Tensor& a) {
  return unary(
      "silu", a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor sin(const Tensor& a) {
  return unary(
      "sin", a, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary(
      "cos", a, [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return record_op("sum", {}, {s}, {a}, [](const BackwardContext& ctx) {
    const double g = ctx.grad_out()[0];
    for (auto& v : ctx.grad_in(0)) v += g;
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.data()) s += v;
  return record_op("mean", {}, {s * inv}, {a}, [inv](const BackwardContext& ctx) {
    const double g = ctx.grad_out()[0] * inv;
    for (auto& v : ctx.grad_in(0)) v += g;
  });
}

}  // namespace pixelflow::ops
