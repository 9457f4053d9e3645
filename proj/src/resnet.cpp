#include "deeppcr/resnet.hpp"

namespace deeppcr {

void ResNetParams::validate() const {
  mlp.validate();
  if (skip_length < 1) throw ShapeError("resnet: skip_length must be >= 1");
  if (mlp.layer_count() < 2) throw ShapeError("resnet: needs an input layer plus a body");
  if (inner_layers() % skip_length != 0) {
    throw ShapeError("resnet: body layer count " + std::to_string(inner_layers()) +
                     " is not divisible by skip length " + std::to_string(skip_length));
  }
  const int w = width();
  for (int l = 0; l < mlp.layer_count(); ++l) {
    if (mlp.weights[l].rows() != w) {
      throw ShapeError("resnet: all body widths must equal " + std::to_string(w) +
                       " for the residual additions");
    }
  }
}

ResNetCollapsedSequence::ResNetCollapsedSequence(const ResNetParams& params, Vector input)
    : params_(&params), input_(std::move(input)) {
  params.validate();
  if (input_.size() != params.mlp.input_dim()) {
    throw ShapeError("resnet: input dim does not match the embedding layer");
  }
}

void ResNetCollapsedSequence::eval_initial(VectorRef out) const {
  out.noalias() = params_->mlp.weights[0] * input_;
  out += params_->mlp.biases[0];
}

void ResNetCollapsedSequence::eval_step(int m, ConstVectorRef z_prev, VectorRef out) const {
  const MlpParams& mlp = params_->mlp;
  const int s = params_->skip_length;
  const int first = (m - 1) * s + 1;
  static thread_local Vector v, act;
  v = z_prev;
  act.resize(v.size());
  for (int l = first; l < first + s; ++l) {
    activate(mlp.activations[l], v, act);
    v.noalias() = mlp.weights[l] * act;
    v += mlp.biases[l];
  }
  out = v + z_prev;
}

void ResNetCollapsedSequence::eval_jacobian(int m, ConstVectorRef z_prev, MatrixRef out) const {
  const MlpParams& mlp = params_->mlp;
  const int s = params_->skip_length;
  const int first = (m - 1) * s + 1;
  const int w = params_->width();

  // Recompute the intra-block activations, accumulating the chain-rule
  // product J_{f_{ms}} ... J_{f_{first}} left to right.
  static thread_local Vector v, act, deriv;
  static thread_local Matrix prod, layer_jac, next;
  v = z_prev;
  act.resize(w);
  deriv.resize(w);
  next.resize(w, w);
  for (int l = first; l < first + s; ++l) {
    activate_deriv(mlp.activations[l], v, deriv);
    layer_jac = mlp.weights[l];
    layer_jac.array().rowwise() *= deriv.transpose().array();
    if (l == first) {
      prod = layer_jac;
    } else {
      next.noalias() = layer_jac * prod;
      prod.swap(next);
    }
    activate(mlp.activations[l], v, act);
    v.noalias() = mlp.weights[l] * act;
    v += mlp.biases[l];
  }
  out = prod;
  out.diagonal().array() += 1.0;  // the residual path
}

ResNetCollapsedSequence resnet_collapsed_sequence(const ResNetParams& params, Vector input) {
  return ResNetCollapsedSequence(params, std::move(input));
}

std::vector<Vector> resnet_layer_rollout(const ResNetParams& params, const Vector& input) {
  params.validate();
  const MlpParams& mlp = params.mlp;
  const int n = params.inner_layers();
  const int s = params.skip_length;
  std::vector<Vector> z(n + 1);
  z[0] = mlp.weights[0] * input + mlp.biases[0];
  Vector act;
  for (int l = 1; l <= n; ++l) {
    act.resize(z[l - 1].size());
    activate(mlp.activations[l], z[l - 1], act);
    z[l] = mlp.weights[l] * act + mlp.biases[l];
    if (l % s == 0) z[l] += z[l - s];
  }
  return z;
}

std::vector<Vector> resnet_layer_backprop(const ResNetParams& params,
                                          const std::vector<Vector>& layer_states,
                                          const Vector& top_grad) {
  params.validate();
  const MlpParams& mlp = params.mlp;
  const int n = params.inner_layers();
  const int s = params.skip_length;
  if (static_cast<int>(layer_states.size()) != n + 1) {
    throw ShapeError("resnet backprop: need layer states z_0..z_n");
  }
  std::vector<Vector> grads(n + 1);
  for (int l = 0; l < n; ++l) grads[l] = Vector::Zero(layer_states[l].size());
  grads[n] = top_grad;
  Vector deriv;
  for (int l = n; l >= 1; --l) {
    const Vector& z = layer_states[l - 1];
    deriv.resize(z.size());
    activate_deriv(mlp.activations[l], z, deriv);
    Vector through = mlp.weights[l].transpose() * grads[l];
    through.array() *= deriv.array();
    grads[l - 1] += through;
    if (l % s == 0 && l - s >= 0) grads[l - s] += grads[l];
  }
  return grads;
}

}  // namespace deeppcr
