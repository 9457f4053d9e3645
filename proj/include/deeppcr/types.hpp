#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace deeppcr {

// All numerical state is dense, row-major, 64-bit float. Block dimensions in
// this library stay small (<= a few hundred), so Eigen's generic kernels are
// the only math backend needed.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using MatrixRef = Eigen::Ref<Matrix>;
using ConstMatrixRef = Eigen::Ref<const Matrix>;
using VectorRef = Eigen::Ref<Vector>;
using ConstVectorRef = Eigen::Ref<const Vector>;

using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using VectorMap = Eigen::Map<Vector>;
using ConstVectorMap = Eigen::Map<const Vector>;

inline constexpr const char* kVersion = "0.1.0";

/// Thrown when operands do not conform (dimension mismatch, bad block shape).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown by the Newton loop when an iterate goes non-finite or the residual
/// blows past the safety factor. Carries the 1-based iteration index.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// Bitwise equality, the currency of the determinism checks.
inline bool bits_equal(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

inline bool bits_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

// ceil(log2(n)) for n >= 1; the number of PCR barriers for a length-n chain.
inline int ceil_log2(std::int64_t n) {
  int k = 0;
  std::int64_t p = 1;
  while (p < n) {
    p <<= 1;
    ++k;
  }
  return k;
}

}  // namespace deeppcr
