#pragma once

#include "deeppcr/types.hpp"

#include <cstdint>
#include <vector>

namespace deeppcr {

// The linearized Newton system. With identity diagonal blocks (never stored),
// row l reads
//
//     dz_l + A_l * dz_{l-coupling} = r_l,
//
// where A_l = sub_ops[l] holds the *negated* step Jacobian -J_{f_l}; row 0 is
// the known boundary value, r_0 = dz_0. A fresh system couples row l to row
// l-1; reduction steps widen the coupling distance. An empty sub_ops[l]
// denotes a fully reduced row (its right-hand side is the solved value).
struct BlockBidiagSystem {
  std::vector<int> state_dims;   // d_0 .. d_L
  std::vector<Matrix> sub_ops;   // index 1..L; [0] unused and empty
  std::vector<Vector> rhs;       // r_0 .. r_L

  int length() const { return static_cast<int>(state_dims.size()) - 1; }

  /// Checks the fresh-system invariants (shape chain, rhs dims). Throws
  /// ShapeError on violation.
  void validate() const;
};

struct PcrTrace {
  // Number of sequential reduction steps (barriers) executed: ceil(log2 L)
  // for L >= 2, zero otherwise.
  int barrier_count = 0;
  // Rows reduced at each step.
  std::vector<std::int64_t> row_update_counts;
  // Bytes of workspace the solve allocated, for the memory-scaling report.
  std::int64_t workspace_bytes = 0;
};

/// Analytic workspace requirement of pcr_solve for a given dimension chain:
/// double-buffered operator and right-hand-side storage plus row flags.
std::int64_t pcr_workspace_estimate(const std::vector<int>& state_dims);

}  // namespace deeppcr
