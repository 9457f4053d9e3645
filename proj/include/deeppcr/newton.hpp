#pragma once

#include "deeppcr/parallel.hpp"
#include "deeppcr/pcr.hpp"
#include "deeppcr/sequence.hpp"
#include "deeppcr/system.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace deeppcr {

struct NewtonConfig {
  int max_iters = 15;
  double abs_tol = 1e-4;   // infinity-norm threshold on the residual
  double rel_tol = 1e-4;   // threshold relative to the first iteration's residual
  // When set, run exactly this many iterations and ignore both tolerances.
  std::optional<int> fixed_iters;

  void validate() const;

  static NewtonConfig forward_pass_defaults() { return NewtonConfig{15, 1e-4, 1e-4, {}}; }
  static NewtonConfig diffusion_defaults() { return NewtonConfig{30, 1e-4, 1e-4, {}}; }
};

enum class StopReason { kAbsTol, kRelTol, kMaxIters, kFixedIters };

const char* to_string(StopReason reason);

struct NewtonReport {
  int iterations = 0;
  // Infinity norm of the residual at the start of each iteration (before
  // that iteration's update).
  std::vector<double> residual_history;
  bool converged = false;
  StopReason stop_reason = StopReason::kMaxIters;
  // Residual of the iterate actually returned, evaluated after the loop.
  double final_residual = 0.0;
};

/// Residual blocks of the collated system, stored with the linearized
/// right-hand-side sign: block 0 is f_0(x) - z_0, block l is
/// f_l(z_{l-1}) - z_l.
std::vector<Vector> residual(const MarkovSequence& seq, const std::vector<Vector>& z);

/// Builds the linearized system at z: sub_ops[l] = -J_{f_l}(z_{l-1}), rhs as
/// in residual(). Jacobian evaluations for different l are independent and
/// run data-parallel on the pool.
BlockBidiagSystem assemble_linearized_system(const MarkovSequence& seq,
                                             const std::vector<Vector>& z,
                                             WorkerPool* pool = nullptr);

/// Newton outer loop: repeatedly assembles the linearized system, solves it
/// with PCR, and applies the correction. Convergence is checked on the
/// infinity norm of the residual before each update; the iteration that
/// satisfies a tolerance still applies its correction, so the returned
/// iterate's predecessor is the one that passed. Linear sequences take a
/// single linearize-and-solve round. Throws DivergenceError when the
/// residual or update goes non-finite, or the residual exceeds 1e6 times its
/// initial value.
std::pair<std::vector<Vector>, NewtonReport> newton_solve(const MarkovSequence& seq,
                                                          const std::vector<Vector>& z0,
                                                          const NewtonConfig& config,
                                                          WorkerPool* pool = nullptr);

// Timing breakdown of a solve, filled by the benchmark harness.
struct NewtonTimings {
  std::int64_t assembly_ns = 0;
  std::int64_t reduction_ns = 0;
};

/// newton_solve variant that reports where the time went and the trace of the
/// last PCR solve.
std::pair<std::vector<Vector>, NewtonReport> newton_solve_timed(const MarkovSequence& seq,
                                                                const std::vector<Vector>& z0,
                                                                const NewtonConfig& config,
                                                                WorkerPool* pool,
                                                                NewtonTimings* timings,
                                                                PcrTrace* last_trace);

/// First-layer-copy initial guess: every block starts from f_0(x).
std::vector<Vector> first_layer_copy_guess(const MarkovSequence& seq);

/// All-blocks-equal initial guess around a fixed anchor (block 0 still uses
/// f_0(x), which is known exactly).
std::vector<Vector> anchor_guess(const MarkovSequence& seq, const Vector& anchor);

}  // namespace deeppcr
