#include "deeppcr/newton.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace deeppcr {
namespace {

using Clock = std::chrono::steady_clock;

std::int64_t ns_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
}

void check_state_dims(const MarkovSequence& seq, const std::vector<Vector>& z) {
  const int L = seq.length();
  if (static_cast<int>(z.size()) != L + 1) {
    throw ShapeError("newton: state stack must have L+1 blocks, got " +
                     std::to_string(z.size()));
  }
  for (int l = 0; l <= L; ++l) {
    if (z[l].size() != seq.state_dim(l)) {
      throw ShapeError("newton: state block " + std::to_string(l) + " has dim " +
                       std::to_string(z[l].size()) + ", expected " +
                       std::to_string(seq.state_dim(l)));
    }
  }
}

// Writes the linearized system at z into the workspace and returns the
// infinity norm of the right-hand side (the residual before the update).
double assemble_into(const MarkovSequence& seq, const std::vector<Vector>& z,
                     PcrWorkspace& ws, WorkerPool* pool) {
  const int L = seq.length();

  auto body = [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t l = begin; l < end; ++l) {
      auto r = ws.rhs_block(static_cast<int>(l));
      if (l == 0) {
        seq.eval_initial(r);
        r -= z[0];
        continue;
      }
      seq.eval_step(static_cast<int>(l), z[l - 1], r);
      r -= z[l];
      auto a = ws.op_block(static_cast<int>(l), ws.dim(static_cast<int>(l) - 1));
      seq.eval_jacobian(static_cast<int>(l), z[l - 1], a);
      a = -a;
      ws.set_row_zero(static_cast<int>(l), false);
    }
  };
  if (pool != nullptr && pool->workers() > 1) {
    pool->parallel_ranges(L + 1, body);
  } else {
    body(0, L + 1);
  }

  // NaN-aware max: comparisons against NaN are false, so track finiteness
  // explicitly instead of relying on std::max to propagate it.
  const double* r = ws.rhs_data();
  double norm = 0.0;
  bool finite = true;
  for (std::int64_t i = 0; i < ws.total_state_size(); ++i) {
    norm = std::max(norm, std::abs(r[i]));
    finite = finite && std::isfinite(r[i]);
  }
  return finite ? norm : std::numeric_limits<double>::quiet_NaN();
}

double residual_norm(const MarkovSequence& seq, const std::vector<Vector>& z) {
  double norm = 0.0;
  bool finite = true;
  for (const Vector& block : residual(seq, z)) {
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      norm = std::max(norm, std::abs(block[i]));
      finite = finite && std::isfinite(block[i]);
    }
  }
  return finite ? norm : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

void NewtonConfig::validate() const {
  if (max_iters < 1) throw ShapeError("newton config: max_iters must be >= 1");
  if (!(abs_tol > 0.0)) throw ShapeError("newton config: abs_tol must be > 0");
  if (!(rel_tol > 0.0)) throw ShapeError("newton config: rel_tol must be > 0");
  if (fixed_iters && *fixed_iters < 1) {
    throw ShapeError("newton config: fixed_iters must be >= 1 when set");
  }
}

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kAbsTol: return "abs_tol";
    case StopReason::kRelTol: return "rel_tol";
    case StopReason::kMaxIters: return "max_iters";
    case StopReason::kFixedIters: return "fixed_iters";
  }
  return "unknown";
}

std::vector<Vector> residual(const MarkovSequence& seq, const std::vector<Vector>& z) {
  check_state_dims(seq, z);
  const int L = seq.length();
  std::vector<Vector> r(L + 1);
  r[0] = seq.initial_value() - z[0];
  for (int l = 1; l <= L; ++l) {
    r[l] = seq.step(l, z[l - 1]) - z[l];
  }
  return r;
}

BlockBidiagSystem assemble_linearized_system(const MarkovSequence& seq,
                                             const std::vector<Vector>& z, WorkerPool* pool) {
  check_state_dims(seq, z);
  const int L = seq.length();
  BlockBidiagSystem system;
  system.state_dims = seq.state_dims();
  system.sub_ops.resize(L + 1);
  system.rhs.resize(L + 1);
  system.rhs[0] = seq.initial_value() - z[0];

  auto body = [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t l = begin; l < end; ++l) {
      const int li = static_cast<int>(l);
      system.rhs[li] = seq.step(li, z[li - 1]) - z[li];
      system.sub_ops[li] = -seq.step_jacobian(li, z[li - 1]);
    }
  };
  if (pool != nullptr && pool->workers() > 1 && L >= 1) {
    pool->parallel_ranges(L, [&](std::int64_t b, std::int64_t e) { body(b + 1, e + 1); });
  } else {
    body(1, L + 1);
  }
  return system;
}

std::pair<std::vector<Vector>, NewtonReport> newton_solve_timed(
    const MarkovSequence& seq, const std::vector<Vector>& z0, const NewtonConfig& config,
    WorkerPool* pool, NewtonTimings* timings, PcrTrace* last_trace) {
  config.validate();
  check_state_dims(seq, z0);

  const int L = seq.length();
  std::vector<Vector> z = z0;
  PcrWorkspace ws;
  ws.reset(seq.state_dims());

  NewtonReport report;
  const bool fixed = config.fixed_iters.has_value();
  const int cap = fixed ? *config.fixed_iters : config.max_iters;
  double first_norm = 0.0;
  bool fired = false;

  for (int k = 1; k <= cap; ++k) {
    auto t0 = Clock::now();
    const double norm = assemble_into(seq, z, ws, pool);
    if (timings != nullptr) timings->assembly_ns += ns_since(t0);

    if (!std::isfinite(norm)) {
      throw DivergenceError("newton: residual is not finite", k);
    }
    report.residual_history.push_back(norm);
    if (k == 1) first_norm = norm;
    if (norm > 1e6 * first_norm && norm > config.abs_tol) {
      throw DivergenceError("newton: residual exceeded 1e6 x initial residual", k);
    }

    // Stop decision uses the pre-update residual; the update below is still
    // applied (it is zero at an exact iterate).
    StopReason reason = StopReason::kMaxIters;
    if (fixed) {
      if (k == cap) {
        fired = true;
        reason = StopReason::kFixedIters;
      }
    } else if (norm <= config.abs_tol) {
      fired = true;
      reason = StopReason::kAbsTol;
    } else if (norm <= config.rel_tol * first_norm) {
      fired = true;
      reason = StopReason::kRelTol;
    } else if (seq.is_linear()) {
      // One linearize-and-solve round is exact for affine steps.
      fired = true;
      reason = StopReason::kAbsTol;
    }

    auto t1 = Clock::now();
    PcrTrace trace = ws.solve(pool);
    if (timings != nullptr) timings->reduction_ns += ns_since(t1);
    if (last_trace != nullptr) *last_trace = std::move(trace);

    const double* dz = ws.rhs_data();
    bool update_finite = true;
    for (std::int64_t i = 0; i < ws.total_state_size(); ++i) {
      update_finite = update_finite && std::isfinite(dz[i]);
    }
    if (!update_finite) {
      throw DivergenceError("newton: update is not finite", k);
    }
    for (int l = 0; l <= L; ++l) {
      z[l] += ws.rhs_block(l);
    }

    report.iterations = k;
    if (fired) {
      report.converged = true;
      report.stop_reason = reason;
      break;
    }
    if (k == cap) {
      report.converged = false;
      report.stop_reason = StopReason::kMaxIters;
    }
  }

  report.final_residual = residual_norm(seq, z);
  if (fixed || report.stop_reason == StopReason::kFixedIters) {
    // Fixed-iteration runs report whether the tolerance was actually met.
    report.converged = report.final_residual <= config.abs_tol ||
                       (first_norm > 0.0 && report.final_residual <= config.rel_tol * first_norm);
    report.stop_reason = StopReason::kFixedIters;
  }
  return {std::move(z), std::move(report)};
}

std::pair<std::vector<Vector>, NewtonReport> newton_solve(const MarkovSequence& seq,
                                                          const std::vector<Vector>& z0,
                                                          const NewtonConfig& config,
                                                          WorkerPool* pool) {
  return newton_solve_timed(seq, z0, config, pool, nullptr, nullptr);
}

std::vector<Vector> first_layer_copy_guess(const MarkovSequence& seq) {
  const int L = seq.length();
  std::vector<Vector> z(L + 1);
  z[0] = seq.initial_value();
  for (int l = 1; l <= L; ++l) {
    if (seq.state_dim(l) == seq.state_dim(0)) {
      z[l] = z[0];
    } else {
      z[l] = Vector::Zero(seq.state_dim(l));
    }
  }
  return z;
}

std::vector<Vector> anchor_guess(const MarkovSequence& seq, const Vector& anchor) {
  const int L = seq.length();
  std::vector<Vector> z(L + 1);
  z[0] = seq.initial_value();
  for (int l = 1; l <= L; ++l) {
    if (anchor.size() != seq.state_dim(l)) {
      throw ShapeError("anchor_guess: anchor dim does not match state dim at block " +
                       std::to_string(l));
    }
    z[l] = anchor;
  }
  return z;
}

}  // namespace deeppcr
