#pragma once

#include "deeppcr/mlp.hpp"
#include "deeppcr/sequence.hpp"

#include <vector>

namespace deeppcr {

// Fully-connected ResNet: layer 0 embeds the input, layers 1..n form the
// residual body (n divisible by skip_length), and every skip_length-th layer
// adds the state from skip_length layers before:
//
//     z_l = W_l sigma_l(z_{l-1}) + b_l            if l % s != 0
//     z_l = W_l sigma_l(z_{l-1}) + b_l + z_{l-s}  otherwise.
//
// All body states share one width so the residual additions are well formed.
struct ResNetParams {
  MlpParams mlp;    // layers 0..n
  int skip_length;  // s

  int inner_layers() const { return mlp.layer_count() - 1; }
  int block_count() const { return inner_layers() / skip_length; }
  int width() const { return static_cast<int>(mlp.weights[0].rows()); }

  void validate() const;
};

// The collapsed sequence: one macro step per residual block. Macro step m
// composes the s plain layers of block m and adds the block input; its
// Jacobian is I plus the product of the layer Jacobians evaluated at the
// intermediate activations of that composition.
class ResNetCollapsedSequence final : public MarkovSequence {
 public:
  ResNetCollapsedSequence(const ResNetParams& params, Vector input);

  int length() const override { return params_->block_count(); }
  int state_dim(int) const override { return params_->width(); }

  void eval_initial(VectorRef out) const override;
  void eval_step(int m, ConstVectorRef z_prev, VectorRef out) const override;
  void eval_jacobian(int m, ConstVectorRef z_prev, MatrixRef out) const override;

 private:
  const ResNetParams* params_;
  Vector input_;
};

ResNetCollapsedSequence resnet_collapsed_sequence(const ResNetParams& params, Vector input);

/// Uncollapsed layer-by-layer rollout with skip additions; returns z_0..z_n.
std::vector<Vector> resnet_layer_rollout(const ResNetParams& params, const Vector& input);

/// Classical reverse accumulation over the layer graph (skips included);
/// returns the loss gradient w.r.t. every layer state z_0..z_n.
std::vector<Vector> resnet_layer_backprop(const ResNetParams& params,
                                          const std::vector<Vector>& layer_states,
                                          const Vector& top_grad);

}  // namespace deeppcr
