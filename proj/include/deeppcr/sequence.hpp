#pragma once

#include "deeppcr/types.hpp"

#include <vector>

namespace deeppcr {

// A Markovian sequential computation: z_0 = f_0(x), z_l = f_l(z_{l-1}) for
// l = 1..L. Implementations expose the per-step map and its Jacobian; both
// must be pure and callable concurrently for different l, which is what the
// parallel system assembly relies on.
class MarkovSequence {
 public:
  virtual ~MarkovSequence() = default;

  virtual int length() const = 0;
  virtual int state_dim(int l) const = 0;  // l in [0, L]

  /// True when every step is affine in its input; such sequences are solved
  /// exactly by a single linearize-and-solve round.
  virtual bool is_linear() const { return false; }

  virtual void eval_initial(VectorRef out) const = 0;
  virtual void eval_step(int l, ConstVectorRef z_prev, VectorRef out) const = 0;
  virtual void eval_jacobian(int l, ConstVectorRef z_prev, MatrixRef out) const = 0;

  Vector initial_value() const {
    Vector v(state_dim(0));
    eval_initial(v);
    return v;
  }

  Vector step(int l, ConstVectorRef z_prev) const {
    Vector v(state_dim(l));
    eval_step(l, z_prev, v);
    return v;
  }

  Matrix step_jacobian(int l, ConstVectorRef z_prev) const {
    Matrix m(state_dim(l), state_dim(l - 1));
    eval_jacobian(l, z_prev, m);
    return m;
  }

  std::vector<int> state_dims() const {
    std::vector<int> dims(length() + 1);
    for (int l = 0; l <= length(); ++l) dims[l] = state_dim(l);
    return dims;
  }
};

/// Evaluates the sequence step by step. This is the timing baseline and the
/// correctness oracle every parallel solve is compared against.
std::vector<Vector> sequential_rollout(const MarkovSequence& seq);

}  // namespace deeppcr
