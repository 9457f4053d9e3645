#pragma once

#include "deeppcr/parallel.hpp"
#include "deeppcr/system.hpp"
#include "deeppcr/types.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace deeppcr {

/// Sequential baseline and correctness oracle: solution[0] = r_0,
/// solution[l] = r_l - A_l * solution[l-1], strictly in order.
std::vector<Vector> forward_substitution_solve(const BlockBidiagSystem& system);

/// Parallel cyclic reduction for unit-lower-block-bidiagonal systems.
/// Reduction distances double (1, 2, 4, ...) until they reach L; each step
/// combines row l with row l-i using only pre-step values:
///
///     r_l <- r_l - A_l * r_{l-i}
///     A_l <- -A_l * A_{l-i}      (cleared when the coupling lands on row 0)
///
/// Returns the solution for rows 0..L and the reduction trace.
std::pair<std::vector<Vector>, PcrTrace> pcr_solve(const BlockBidiagSystem& system,
                                                   WorkerPool* pool = nullptr);

/// One reduction step at the given power-of-two distance; rows with
/// l - distance < 0 are untouched. Exposed so tests can assert the
/// intermediate coupling structure (distance 1 leaves row l coupled to l-2,
/// the next step to l-4, and so on).
BlockBidiagSystem pcr_reduce_step(const BlockBidiagSystem& system, std::int64_t distance);

using ReduceStepFn = std::function<BlockBidiagSystem(const BlockBidiagSystem&, std::int64_t)>;

/// Reference solve driven by repeated pcr_reduce_step calls. Slower than
/// pcr_solve but accepts an injectable reduction step, which the mutation
/// sanity tests use to prove the oracle check can fail.
std::vector<Vector> pcr_solve_stepwise(BlockBidiagSystem system,
                                       const ReduceStepFn& reduce = pcr_reduce_step);

// Flat double-buffered storage backing pcr_solve. The Newton loop owns one of
// these and assembles the linearized system directly into it, so repeated
// solves reuse the same allocation.
class PcrWorkspace {
 public:
  void reset(const std::vector<int>& state_dims);

  int length() const { return static_cast<int>(dims_.size()) - 1; }
  int dim(int l) const { return dims_[l]; }
  const std::vector<int>& dims() const { return dims_; }
  std::int64_t total_state_size() const { return state_size_; }
  std::int64_t bytes() const { return bytes_; }

  // Assembly surface (current buffer). op block l is written as the negated
  // Jacobian, contiguous d_l x d_{l-1}; marking a row zero declares it fully
  // reduced (row 0 always is).
  double* rhs_data() { return rhs_[cur_].data(); }
  const double* rhs_data() const { return rhs_[cur_].data(); }
  VectorMap rhs_block(int l) { return VectorMap(rhs_[cur_].data() + rhs_off_[l], dims_[l]); }
  MatrixMap op_block(int l, int cols) {
    return MatrixMap(ops_[cur_].data() + op_off_[l], dims_[l], cols);
  }
  void set_row_zero(int l, bool zero) { zero_[cur_][l] = zero ? 1 : 0; }
  bool row_zero(int l) const { return zero_[cur_][l] != 0; }

  /// Loads a fresh BlockBidiagSystem (coupling distance 1) into the buffers.
  void load(const BlockBidiagSystem& system);

  /// Runs the full reduction; afterwards rhs blocks hold the solution.
  PcrTrace solve(WorkerPool* pool);

 private:
  void run_barrier(std::int64_t distance, WorkerPool* pool, PcrTrace& trace);
  void fold_known_row();

  std::vector<int> dims_;
  std::vector<std::int64_t> rhs_off_;
  std::vector<std::int64_t> op_off_;
  std::vector<double> rhs_[2];
  std::vector<double> ops_[2];
  std::vector<std::uint8_t> zero_[2];
  std::int64_t state_size_ = 0;
  std::int64_t bytes_ = 0;
  int dmax_ = 0;
  int uniform_dim_ = 0;  // the common block dim, or 0 when dims vary
  int cur_ = 0;
};

}  // namespace deeppcr
