#pragma once

#include "deeppcr/types.hpp"

namespace deeppcr {

// Dense kernels used by the solvers. Thin, shape-checked wrappers over Eigen
// expressions; all of them are pure and bitwise-reproducible for identical
// inputs.

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + ")");
  }
  return a * b;
}

inline Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols() != x.size()) {
    throw ShapeError("matvec: matrix has " + std::to_string(a.cols()) +
                     " cols, vector has " + std::to_string(x.size()));
  }
  return a * x;
}

inline Matrix outer(const Vector& u, const Vector& v) {
  return u * v.transpose();
}

inline double norm_inf(const Vector& x) {
  return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff();
}

inline double norm_l2(const Vector& x) { return x.norm(); }

/// alpha * x + y
inline Vector axpy(double alpha, const Vector& x, const Vector& y) {
  if (x.size() != y.size()) {
    throw ShapeError("axpy: operand lengths differ (" + std::to_string(x.size()) +
                     " vs " + std::to_string(y.size()) + ")");
  }
  return alpha * x + y;
}

inline Matrix diag_from(const Vector& values) {
  Matrix m = Matrix::Zero(values.size(), values.size());
  m.diagonal() = values;
  return m;
}

}  // namespace deeppcr
