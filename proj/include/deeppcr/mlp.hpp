#pragma once

#include "deeppcr/sequence.hpp"
#include "deeppcr/types.hpp"

#include <string>
#include <vector>

namespace deeppcr {

enum class Activation { kIdentity, kRelu, kTanh, kSigmoid };

const char* to_string(Activation act);
Activation activation_from_string(const std::string& name);

double activate(Activation act, double x);
// Derivative; the ReLU subgradient at 0 is taken as 0.
double activate_deriv(Activation act, double x);

void activate(Activation act, ConstVectorRef x, VectorRef out);
void activate_deriv(Activation act, ConstVectorRef x, VectorRef out);

// Weights and biases for layers 0..L: layer 0 consumes the raw input, layer
// l >= 1 applies its activation to the previous state first,
// z_l = W_l * sigma_l(z_{l-1}) + b_l.
struct MlpParams {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  std::vector<Activation> activations;  // sigma_l per layer; index 0 is unused

  int layer_count() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }

  void validate() const;
};

// Forward pass as a Markov sequence of length L = layer_count - 1:
// initial value W_0 x + b_0, step l applies layer l, and the step Jacobian is
// W_l * diag(sigma_l'(z_{l-1})). Holds references to the parameters, which
// must outlive the sequence.
class MlpForwardSequence final : public MarkovSequence {
 public:
  MlpForwardSequence(const MlpParams& params, Vector input);

  int length() const override { return params_->layer_count() - 1; }
  int state_dim(int l) const override { return static_cast<int>(params_->weights[l].rows()); }
  bool is_linear() const override;

  void eval_initial(VectorRef out) const override;
  void eval_step(int l, ConstVectorRef z_prev, VectorRef out) const override;
  void eval_jacobian(int l, ConstVectorRef z_prev, MatrixRef out) const override;

  const Vector& input() const { return input_; }

 private:
  const MlpParams* params_;
  Vector input_;
};

MlpForwardSequence mlp_forward_sequence(const MlpParams& params, Vector input);

// Adjoint chain of the backward pass, run forward over reversed layers:
// state k holds the gradient of the loss w.r.t. z_{L-k}, starting from the
// output gradient. Every step is linear (one transposed Jacobian at the
// recorded forward activations), so one PCR solve recovers the whole chain.
class MlpBackwardSequence final : public MarkovSequence {
 public:
  MlpBackwardSequence(const MlpParams& params, const std::vector<Vector>& forward_states,
                      Vector output_grad);

  int length() const override { return params_->layer_count() - 1; }
  int state_dim(int k) const override;
  bool is_linear() const override { return true; }

  void eval_initial(VectorRef out) const override;
  void eval_step(int k, ConstVectorRef g_prev, VectorRef out) const override;
  void eval_jacobian(int k, ConstVectorRef g_prev, MatrixRef out) const override;

 private:
  // Forward layer index whose transposed Jacobian step k applies.
  int layer_of(int k) const { return length() - k + 1; }

  const MlpParams* params_;
  const std::vector<Vector>* forward_states_;
  Vector output_grad_;
};

MlpBackwardSequence mlp_backward_sequence(const MlpParams& params,
                                          const std::vector<Vector>& forward_states,
                                          Vector output_grad);

struct LayerGrads {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

/// Per-layer parameter gradients from the state gradients:
/// grad W_l = grad z_l (x) sigma_l(z_{l-1}), grad b_l = grad z_l; layer 0
/// uses the raw input in place of an activated state.
LayerGrads param_gradients(const MlpParams& params, const Vector& input,
                           const std::vector<Vector>& forward_states,
                           const std::vector<Vector>& state_grads);

/// Classical layer-by-layer backpropagation; returns the gradients w.r.t.
/// every state z_0..z_L. Oracle for the PCR-based backward pass.
std::vector<Vector> sequential_backprop(const MlpParams& params,
                                        const std::vector<Vector>& forward_states,
                                        const Vector& output_grad);

}  // namespace deeppcr
