#include "deeppcr/mlp.hpp"

#include <cmath>

namespace deeppcr {

const char* to_string(Activation act) {
  switch (act) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ShapeError("unknown activation: " + name);
}

double activate(Activation act, double x) {
  switch (act) {
    case Activation::kIdentity: return x;
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kTanh: return std::tanh(x);
    case Activation::kSigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

double activate_deriv(Activation act, double x) {
  switch (act) {
    case Activation::kIdentity: return 1.0;
    case Activation::kRelu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::kSigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

void activate(Activation act, ConstVectorRef x, VectorRef out) {
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = activate(act, x[i]);
}

void activate_deriv(Activation act, ConstVectorRef x, VectorRef out) {
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = activate_deriv(act, x[i]);
}

void MlpParams::validate() const {
  if (weights.empty()) throw ShapeError("mlp: needs at least one layer");
  if (biases.size() != weights.size() || activations.size() != weights.size()) {
    throw ShapeError("mlp: weights, biases and activations must align per layer");
  }
  for (int l = 0; l < layer_count(); ++l) {
    if (weights[l].rows() < 1 || weights[l].cols() < 1) {
      throw ShapeError("mlp: layer " + std::to_string(l) + " has an empty weight matrix");
    }
    if (biases[l].size() != weights[l].rows()) {
      throw ShapeError("mlp: bias " + std::to_string(l) + " does not match layer output dim");
    }
    if (l >= 1 && weights[l].cols() != weights[l - 1].rows()) {
      throw ShapeError("mlp: layer " + std::to_string(l) + " input dim " +
                       std::to_string(weights[l].cols()) + " does not chain from previous");
    }
  }
}

MlpForwardSequence::MlpForwardSequence(const MlpParams& params, Vector input)
    : params_(&params), input_(std::move(input)) {
  params.validate();
  if (input_.size() != params.input_dim()) {
    throw ShapeError("mlp forward: input dim " + std::to_string(input_.size()) +
                     " does not match W_0 cols " + std::to_string(params.input_dim()));
  }
}

bool MlpForwardSequence::is_linear() const {
  for (int l = 1; l < params_->layer_count(); ++l) {
    if (params_->activations[l] != Activation::kIdentity) return false;
  }
  return true;
}

void MlpForwardSequence::eval_initial(VectorRef out) const {
  out.noalias() = params_->weights[0] * input_;
  out += params_->biases[0];
}

void MlpForwardSequence::eval_step(int l, ConstVectorRef z_prev, VectorRef out) const {
  // Scratch is thread-local: step evaluations for different l run
  // concurrently during assembly.
  static thread_local Vector act;
  act.resize(z_prev.size());
  activate(params_->activations[l], z_prev, act);
  out.noalias() = params_->weights[l] * act;
  out += params_->biases[l];
}

void MlpForwardSequence::eval_jacobian(int l, ConstVectorRef z_prev, MatrixRef out) const {
  // W_l * diag(sigma'(z)) scales the columns of W_l.
  static thread_local Vector deriv;
  deriv.resize(z_prev.size());
  activate_deriv(params_->activations[l], z_prev, deriv);
  out = params_->weights[l];
  out.array().rowwise() *= deriv.transpose().array();
}

MlpForwardSequence mlp_forward_sequence(const MlpParams& params, Vector input) {
  return MlpForwardSequence(params, std::move(input));
}

MlpBackwardSequence::MlpBackwardSequence(const MlpParams& params,
                                         const std::vector<Vector>& forward_states,
                                         Vector output_grad)
    : params_(&params), forward_states_(&forward_states), output_grad_(std::move(output_grad)) {
  params.validate();
  if (static_cast<int>(forward_states.size()) != params.layer_count()) {
    throw ShapeError("mlp backward: need forward states z_0..z_L");
  }
  for (int l = 0; l < params.layer_count(); ++l) {
    if (forward_states[l].size() != params.weights[l].rows()) {
      throw ShapeError("mlp backward: forward state " + std::to_string(l) +
                       " does not match layer output dim");
    }
  }
  if (output_grad_.size() != params.output_dim()) {
    throw ShapeError("mlp backward: output gradient dim mismatch");
  }
}

int MlpBackwardSequence::state_dim(int k) const {
  // State k is the gradient w.r.t. z_{L-k}.
  return static_cast<int>(params_->weights[length() - k].rows());
}

void MlpBackwardSequence::eval_initial(VectorRef out) const { out = output_grad_; }

void MlpBackwardSequence::eval_step(int k, ConstVectorRef g_prev, VectorRef out) const {
  const int l = layer_of(k);
  const Vector& z = (*forward_states_)[l - 1];
  static thread_local Vector deriv;
  deriv.resize(z.size());
  activate_deriv(params_->activations[l], z, deriv);
  // (W_l diag(s))^T g = diag(s) W_l^T g
  out.noalias() = params_->weights[l].transpose() * g_prev;
  out.array() *= deriv.array();
}

void MlpBackwardSequence::eval_jacobian(int k, ConstVectorRef, MatrixRef out) const {
  const int l = layer_of(k);
  const Vector& z = (*forward_states_)[l - 1];
  static thread_local Vector deriv;
  deriv.resize(z.size());
  activate_deriv(params_->activations[l], z, deriv);
  out = params_->weights[l].transpose();
  out.array().colwise() *= deriv.array();
}

MlpBackwardSequence mlp_backward_sequence(const MlpParams& params,
                                          const std::vector<Vector>& forward_states,
                                          Vector output_grad) {
  return MlpBackwardSequence(params, forward_states, std::move(output_grad));
}

LayerGrads param_gradients(const MlpParams& params, const Vector& input,
                           const std::vector<Vector>& forward_states,
                           const std::vector<Vector>& state_grads) {
  const int layers = params.layer_count();
  if (static_cast<int>(forward_states.size()) != layers ||
      static_cast<int>(state_grads.size()) != layers) {
    throw ShapeError("param_gradients: need one state and one gradient per layer");
  }
  LayerGrads grads;
  grads.weights.resize(layers);
  grads.biases.resize(layers);
  for (int l = 0; l < layers; ++l) {
    Vector in;
    if (l == 0) {
      in = input;
    } else {
      in.resize(forward_states[l - 1].size());
      activate(params.activations[l], forward_states[l - 1], in);
    }
    grads.weights[l] = state_grads[l] * in.transpose();
    grads.biases[l] = state_grads[l];
  }
  return grads;
}

std::vector<Vector> sequential_backprop(const MlpParams& params,
                                        const std::vector<Vector>& forward_states,
                                        const Vector& output_grad) {
  const int L = params.layer_count() - 1;
  std::vector<Vector> grads(L + 1);
  grads[L] = output_grad;
  for (int l = L; l >= 1; --l) {
    const Vector& z = forward_states[l - 1];
    Vector deriv(z.size());
    activate_deriv(params.activations[l], z, deriv);
    grads[l - 1].noalias() = params.weights[l].transpose() * grads[l];
    grads[l - 1].array() *= deriv.array();
  }
  return grads;
}

}  // namespace deeppcr
