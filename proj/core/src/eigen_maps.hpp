#pragma once

// Eigen views over the flat row-major buffers used by Tensor. Private to the
// core library.

#include <Eigen/Core>
#include <span>

namespace pixelflow::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using StridedStride = Eigen::OuterStride<>;

inline Eigen::Map<RowMatrix> mat(std::span<double> s, std::size_t rows, std::size_t cols) {
  return {s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

inline Eigen::Map<const RowMatrix> cmat(std::span<const double> s, std::size_t rows,
                                        std::size_t cols) {
  return {s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

inline Eigen::Map<RowVector> row(std::span<double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}

inline Eigen::Map<const RowVector> crow(std::span<const double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}

// Column block [col, col + cols) of a row-major matrix with `ld` columns.
inline Eigen::Map<RowMatrix, 0, StridedStride> block(double* base, std::size_t rows,
                                                     std::size_t cols, std::size_t ld) {
  return {base, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
          StridedStride(static_cast<Eigen::Index>(ld))};
}

inline Eigen::Map<const RowMatrix, 0, StridedStride> cblock(const double* base,
                                                            std::size_t rows,
                                                            std::size_t cols,
                                                            std::size_t ld) {
  return {base, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
          StridedStride(static_cast<Eigen::Index>(ld))};
}

}  // namespace pixelflow::detail
