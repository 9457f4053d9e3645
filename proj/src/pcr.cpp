#include "deeppcr/pcr.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>

namespace deeppcr {

void BlockBidiagSystem::validate() const {
  if (state_dims.empty()) throw ShapeError("system: state_dims must hold d_0..d_L");
  const int L = length();
  if (static_cast<int>(sub_ops.size()) != L + 1 || static_cast<int>(rhs.size()) != L + 1) {
    throw ShapeError("system: sub_ops and rhs must have L+1 entries");
  }
  for (int l = 0; l <= L; ++l) {
    if (state_dims[l] < 1) throw ShapeError("system: state dims must be >= 1");
    if (rhs[l].size() != state_dims[l]) {
      throw ShapeError("system: rhs[" + std::to_string(l) + "] has dim " +
                       std::to_string(rhs[l].size()) + ", expected " +
                       std::to_string(state_dims[l]));
    }
  }
  for (int l = 1; l <= L; ++l) {
    if (sub_ops[l].rows() != state_dims[l] || sub_ops[l].cols() != state_dims[l - 1]) {
      throw ShapeError("system: sub_ops[" + std::to_string(l) + "] must be " +
                       std::to_string(state_dims[l]) + "x" + std::to_string(state_dims[l - 1]));
    }
  }
}

std::int64_t pcr_workspace_estimate(const std::vector<int>& state_dims) {
  if (state_dims.empty()) return 0;
  const int dmax = *std::max_element(state_dims.begin(), state_dims.end());
  std::int64_t state = 0;
  std::int64_t ops = 0;
  for (std::size_t l = 0; l < state_dims.size(); ++l) {
    state += state_dims[l];
    if (l >= 1) ops += static_cast<std::int64_t>(state_dims[l]) * dmax;
  }
  return 2 * (state + ops) * static_cast<std::int64_t>(sizeof(double)) +
         2 * static_cast<std::int64_t>(state_dims.size());
}

std::vector<Vector> forward_substitution_solve(const BlockBidiagSystem& system) {
  system.validate();
  const int L = system.length();
  std::vector<Vector> solution(L + 1);
  solution[0] = system.rhs[0];
  for (int l = 1; l <= L; ++l) {
    solution[l] = system.rhs[l];
    solution[l].noalias() -= system.sub_ops[l] * solution[l - 1];
  }
  return solution;
}

void PcrWorkspace::reset(const std::vector<int>& state_dims) {
  dims_ = state_dims;
  const int L = length();
  dmax_ = 0;
  for (int d : dims_) dmax_ = std::max(dmax_, d);
  uniform_dim_ = dims_.empty() ? 0 : dims_[0];
  for (int d : dims_) {
    if (d != uniform_dim_) {
      uniform_dim_ = 0;
      break;
    }
  }
  rhs_off_.assign(L + 1, 0);
  op_off_.assign(L + 1, 0);
  state_size_ = 0;
  std::int64_t op_size = 0;
  for (int l = 0; l <= L; ++l) {
    rhs_off_[l] = state_size_;
    state_size_ += dims_[l];
    op_off_[l] = op_size;
    // Slot l is sized d_l x dmax: reductions shrink the written shape but
    // never grow past the widest state.
    if (l >= 1) op_size += static_cast<std::int64_t>(dims_[l]) * dmax_;
  }
  for (int b = 0; b < 2; ++b) {
    rhs_[b].assign(state_size_, 0.0);
    ops_[b].assign(op_size, 0.0);
    zero_[b].assign(L + 1, 0);
  }
  zero_[0][0] = zero_[1][0] = 1;
  bytes_ = 2 * (state_size_ + op_size) * static_cast<std::int64_t>(sizeof(double)) +
           2 * static_cast<std::int64_t>(L + 1);
  cur_ = 0;
}

void PcrWorkspace::load(const BlockBidiagSystem& system) {
  reset(system.state_dims);
  const int L = length();
  for (int l = 0; l <= L; ++l) {
    rhs_block(l) = system.rhs[l];
    if (l >= 1) {
      if (system.sub_ops[l].size() == 0) {
        set_row_zero(l, true);
      } else {
        op_block(l, dims_[l - 1]) = system.sub_ops[l];
        set_row_zero(l, false);
      }
    }
  }
}

namespace {

// One barrier's worth of row reductions over raw buffers. D > 0 selects a
// fixed-size kernel for uniform block dims (the gemm dispatch overhead
// dominates tiny blocks otherwise); D == 0 is the general rectangular path.
struct BarrierView {
  const double* rsrc;
  double* rdst;
  const double* asrc;
  double* adst;
  const std::uint8_t* zsrc;
  std::uint8_t* zdst;
  const std::int64_t* rhs_off;
  const std::int64_t* op_off;
  const int* dims;
  std::int64_t distance;
};

template <int D>
std::int64_t reduce_rows(const BarrierView& v, std::int64_t begin, std::int64_t end) {
  std::int64_t reduced = 0;
  for (std::int64_t l = begin; l < end; ++l) {
    const int dl = D > 0 ? D : v.dims[l];
    VectorMap r_dst(v.rdst + v.rhs_off[l], dl);
    ConstVectorMap r_src(v.rsrc + v.rhs_off[l], dl);
    if (l < v.distance || v.zsrc[l]) {
      // Row is final (or not yet in range); carry it forward unchanged.
      r_dst = r_src;
      v.zdst[l] = v.zsrc[l];
      continue;
    }
    const std::int64_t t = l - v.distance;
    const int dt = D > 0 ? D : v.dims[t];
    if constexpr (D == 1) {
      const double a_l = v.asrc[v.op_off[l]];
      v.rdst[v.rhs_off[l]] = v.rsrc[v.rhs_off[l]] - a_l * v.rsrc[v.rhs_off[t]];
      if (t == 0 || v.zsrc[t]) {
        v.zdst[l] = 1;
      } else {
        v.adst[v.op_off[l]] = -(a_l * v.asrc[v.op_off[t]]);
        v.zdst[l] = 0;
      }
    } else if constexpr (D > 1) {
      using FMat = Eigen::Matrix<double, D, D, Eigen::RowMajor>;
      using FVec = Eigen::Matrix<double, D, 1>;
      Eigen::Map<const FMat> a_l(v.asrc + v.op_off[l]);
      Eigen::Map<const FVec> r_t(v.rsrc + v.rhs_off[t]);
      Eigen::Map<FVec> rd(v.rdst + v.rhs_off[l]);
      Eigen::Map<const FVec> rs(v.rsrc + v.rhs_off[l]);
      rd.noalias() = rs - a_l * r_t;
      if (t == 0 || v.zsrc[t]) {
        v.zdst[l] = 1;
      } else {
        Eigen::Map<const FMat> a_t(v.asrc + v.op_off[t]);
        Eigen::Map<FMat> a_dst(v.adst + v.op_off[l]);
        a_dst.noalias() = -(a_l * a_t);
        v.zdst[l] = 0;
      }
    } else {
      ConstMatrixMap a_l(v.asrc + v.op_off[l], dl, dt);
      ConstVectorMap r_t(v.rsrc + v.rhs_off[t], dt);
      r_dst = r_src;
      r_dst.noalias() -= a_l * r_t;
      if (t == 0 || v.zsrc[t]) {
        // Coupling reached a solved row; this row is now fully reduced.
        v.zdst[l] = 1;
      } else {
        const int dtt = v.dims[t - v.distance];
        ConstMatrixMap a_t(v.asrc + v.op_off[t], dt, dtt);
        MatrixMap a_dst(v.adst + v.op_off[l], dl, dtt);
        a_dst.noalias() = -(a_l * a_t);
        v.zdst[l] = 0;
      }
    }
    ++reduced;
  }
  return reduced;
}

using ReduceRowsFn = std::int64_t (*)(const BarrierView&, std::int64_t, std::int64_t);

ReduceRowsFn select_kernel(int uniform_dim) {
  switch (uniform_dim) {
    case 1: return &reduce_rows<1>;
    case 2: return &reduce_rows<2>;
    case 4: return &reduce_rows<4>;
    case 8: return &reduce_rows<8>;
    case 16: return &reduce_rows<16>;
    default: return &reduce_rows<0>;
  }
}

}  // namespace

void PcrWorkspace::run_barrier(std::int64_t distance, WorkerPool* pool, PcrTrace& trace) {
  const int L = length();
  const int src = cur_;
  const int dst = cur_ ^ 1;
  std::atomic<std::int64_t> reduced{0};

  BarrierView view{rhs_[src].data(),  rhs_[dst].data(), ops_[src].data(),
                   ops_[dst].data(),  zero_[src].data(), zero_[dst].data(),
                   rhs_off_.data(),   op_off_.data(),    dims_.data(),
                   distance};
  const ReduceRowsFn kernel = select_kernel(uniform_dim_);

  auto body = [&](std::int64_t begin, std::int64_t end) {
    reduced.fetch_add(kernel(view, begin, end), std::memory_order_relaxed);
  };

  if (pool != nullptr && pool->workers() > 1) {
    pool->parallel_ranges(L + 1, body);
  } else {
    body(0, L + 1);
  }
  cur_ = dst;
  ++trace.barrier_count;
  trace.row_update_counts.push_back(reduced.load());
}

void PcrWorkspace::fold_known_row() {
  // After the last barrier any still-coupled row points at the known row 0;
  // folding it needs no synchronization with other rows.
  const int L = length();
  ConstVectorMap r0(rhs_[cur_].data() + rhs_off_[0], dims_[0]);
  for (int l = 1; l <= L; ++l) {
    if (zero_[cur_][l]) continue;
    VectorMap r_l(rhs_[cur_].data() + rhs_off_[l], dims_[l]);
    ConstMatrixMap a_l(ops_[cur_].data() + op_off_[l], dims_[l], dims_[0]);
    r_l.noalias() -= a_l * r0;
    zero_[cur_][l] = 1;
  }
}

PcrTrace PcrWorkspace::solve(WorkerPool* pool) {
  PcrTrace trace;
  trace.workspace_bytes = bytes_;
  const int L = length();
  for (std::int64_t i = 1; i < L; i <<= 1) {
    run_barrier(i, pool, trace);
  }
  fold_known_row();
  return trace;
}

std::pair<std::vector<Vector>, PcrTrace> pcr_solve(const BlockBidiagSystem& system,
                                                   WorkerPool* pool) {
  system.validate();
  PcrWorkspace ws;
  ws.load(system);
  PcrTrace trace = ws.solve(pool);
  const int L = ws.length();
  std::vector<Vector> solution(L + 1);
  for (int l = 0; l <= L; ++l) solution[l] = ws.rhs_block(l);
  return {std::move(solution), trace};
}

BlockBidiagSystem pcr_reduce_step(const BlockBidiagSystem& system, std::int64_t distance) {
  if (distance < 1 || (distance & (distance - 1)) != 0) {
    throw ShapeError("pcr_reduce_step: distance must be a power of two >= 1, got " +
                     std::to_string(distance));
  }
  const int L = system.length();
  BlockBidiagSystem out = system;
  for (std::int64_t l = 1; l <= L; ++l) {
    if (l - distance < 0) continue;            // untouched
    if (system.sub_ops[l].size() == 0) continue;  // already reduced, no-op
    const std::int64_t t = l - distance;
    const Matrix& a_l = system.sub_ops[l];
    if (a_l.cols() != system.rhs[t].size()) {
      throw ShapeError("pcr_reduce_step: row " + std::to_string(l) +
                       " does not couple at distance " + std::to_string(distance));
    }
    out.rhs[l] = system.rhs[l];
    out.rhs[l].noalias() -= a_l * system.rhs[t];
    if (t == 0 || system.sub_ops[t].size() == 0) {
      out.sub_ops[l] = Matrix();  // coupling was to a known row: fully reduced
    } else {
      out.sub_ops[l] = -(a_l * system.sub_ops[t]);
    }
  }
  return out;
}

std::vector<Vector> pcr_solve_stepwise(BlockBidiagSystem system, const ReduceStepFn& reduce) {
  system.validate();
  const int L = system.length();
  for (std::int64_t i = 1; i < L; i <<= 1) {
    system = reduce(system, i);
  }
  for (int l = 1; l <= L; ++l) {
    if (system.sub_ops[l].size() == 0) continue;
    system.rhs[l].noalias() -= system.sub_ops[l] * system.rhs[0];
    system.sub_ops[l] = Matrix();
  }
  return std::move(system.rhs);
}

}  // namespace deeppcr
