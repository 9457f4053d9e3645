#pragma once

#include "deeppcr/mlp.hpp"
#include "deeppcr/sequence.hpp"
#include "deeppcr/types.hpp"

#include <cstdint>
#include <vector>

namespace deeppcr {

// DDPM-style coefficients: alpha_l = 1 - beta_l, alpha_bar_l the running
// product of alphas.
struct NoiseSchedule {
  Vector alphas;
  Vector betas;
  Vector alpha_bars;

  int length() const { return static_cast<int>(alphas.size()); }
  void validate() const;

  /// The standard linear-beta default; the endpoints are configurable.
  static NoiseSchedule linear_beta(int steps, double beta_start = 1e-4, double beta_end = 0.02);
};

// Gaussian draws pre-sampled for every denoising step, so a sequential and a
// parallel run target the same trajectory.
struct NoiseTape {
  std::vector<Vector> draws;
  std::uint64_t seed = 0;

  int length() const { return static_cast<int>(draws.size()); }

  static NoiseTape sample(int steps, int dim, std::uint64_t seed);
  static NoiseTape zeros(int steps, int dim);
};

// Small residual MLP denoiser with a sinusoidal step embedding added to the
// input: g(z, l) = u + net(u) with u = z + emb(l). Randomly initialized; the
// second layer is scaled down so the skip path dominates, which keeps the
// denoising chain contractive the way a trained denoiser would.
struct Denoiser {
  MlpParams net;    // two layers, tanh between them
  int dim = 0;
  double output_scale = 1.0;  // 0 disables the denoiser entirely (g == 0)

  static Denoiser random(int dim, int hidden, std::uint64_t seed);
  static Denoiser zero(int dim);

  bool is_zero() const { return output_scale == 0.0; }
  Vector embedding(int l) const;
  void eval(ConstVectorRef z, int l, VectorRef out) const;
  void jacobian(ConstVectorRef z, int l, MatrixRef out) const;
  // Variants taking a precomputed step embedding (the sequence caches them).
  void eval_with(ConstVectorRef z, ConstVectorRef emb, VectorRef out) const;
  void jacobian_with(ConstVectorRef z, ConstVectorRef emb, MatrixRef out) const;
};

// The denoising chain as a Markov sequence:
//
//   z_l = (z_{l-1} - c_l g(z_{l-1}, l)) / sqrt(alpha_l) + sqrt(beta_l) xi_l,
//   c_l = (1 - alpha_l) / sqrt(1 - alpha_bar_l),
//
// with xi_l read from the tape. The step Jacobian follows by differentiating
// in z_{l-1}: (I - c_l J_g) / sqrt(alpha_l). c_l is defined as 0 when
// beta_l = 0 (its numerator vanishes), which covers the degenerate
// all-alpha-one schedule.
class DiffusionSequence final : public MarkovSequence {
 public:
  DiffusionSequence(const Denoiser& denoiser, const NoiseSchedule& schedule,
                    const NoiseTape& tape, Vector z_init);

  int length() const override { return schedule_->length(); }
  int state_dim(int) const override { return static_cast<int>(z_init_.size()); }
  bool is_linear() const override { return denoiser_->is_zero(); }

  void eval_initial(VectorRef out) const override;
  void eval_step(int l, ConstVectorRef z_prev, VectorRef out) const override;
  void eval_jacobian(int l, ConstVectorRef z_prev, MatrixRef out) const override;

 private:
  double coeff(int l) const;

  const Denoiser* denoiser_;
  const NoiseSchedule* schedule_;
  const NoiseTape* tape_;
  Vector z_init_;
  std::vector<Vector> embeddings_;  // one per step, cached at construction
};

DiffusionSequence diffusion_sequence(const Denoiser& denoiser, const NoiseSchedule& schedule,
                                     const NoiseTape& tape, Vector z_init);

}  // namespace deeppcr
