#pragma once

#include "deeppcr/data.hpp"
#include "deeppcr/mlp.hpp"
#include "deeppcr/newton.hpp"
#include "deeppcr/parallel.hpp"
#include "deeppcr/resnet.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace deeppcr {

struct SgdConfig {
  double learning_rate = 1e-3;
  int epochs = 2;
  int batch_size = 128;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Deterministic layer initialization: Kaiming-uniform bounds for layers fed
/// by a ReLU, Glorot-uniform otherwise; biases zero. widths holds the input
/// dim followed by each layer's output dim; activations[l] is the activation
/// feeding layer l (index 0 ignored).
MlpParams init_params(const std::vector<int>& widths, const std::vector<Activation>& activations,
                      std::uint64_t seed);

/// Uniform +-1/sqrt(fan_in) for weights *and* biases. This is the
/// initialization the deep benchmark chains use: the nonzero biases keep
/// pre-activations away from the ReLU kinks at any depth, so states stay O(1)
/// and the Newton iteration count stays flat in L.
MlpParams init_params_fanin_uniform(const std::vector<int>& widths,
                                    const std::vector<Activation>& activations,
                                    std::uint64_t seed);

struct SoftmaxXent {
  double loss;
  Vector grad_logits;
};

/// Numerically stabilized softmax cross entropy; the gradient is
/// softmax(logits) - one_hot(label).
SoftmaxXent softmax_xent(const Vector& logits, int label);

/// Plain gradient step p - lr * g, no momentum, no scheduler.
MlpParams sgd_step(const MlpParams& params, const LayerGrads& grads, double lr);
void sgd_step_inplace(MlpParams& params, const LayerGrads& grads, double lr);

enum class TrainMode { kSequential, kDeepPcr };
const char* to_string(TrainMode mode);

struct TrainLogRow {
  int step = 0;   // global optimization step, 0-based
  int epoch = 0;  // 0-based
  TrainMode mode = TrainMode::kSequential;
  double loss = 0.0;
  double accuracy = 0.0;  // batch accuracy
  std::int64_t fwd_time_ns = 0;
  std::int64_t bwd_time_ns = 0;
  // Max over the batch's forward solves; 0 in sequential mode. A diverged
  // batch aborts the run and logs minus the failing Newton iteration here.
  int newton_iters = 0;
};

// ResNet body plus a linear classifier head. The head stays outside the
// Markov system: the collapsed sequence covers the residual body, the head
// maps the final state to logits.
struct ResNetClassifier {
  ResNetParams body;
  Matrix head_weight;
  Vector head_bias;
  Activation head_activation = Activation::kRelu;  // applied to the body output

  void validate() const;
};

ResNetClassifier init_resnet_classifier(int input_dim, int width, int inner_layers,
                                        int skip_length, int classes, Activation activation,
                                        std::uint64_t seed);

/// Trains with per-batch forward/backward either fully sequential or via the
/// parallel solver (Newton over the collapsed body, one PCR solve for the
/// adjoint). DeepPCR forward passes warm-start from the batch-mean states of
/// the previous optimization step; the first batch copies the first-layer
/// output. Emits one log row per batch.
std::pair<ResNetClassifier, std::vector<TrainLogRow>> train_resnet(
    ResNetClassifier model, const Dataset& data, const SgdConfig& sgd, TrainMode mode,
    const NewtonConfig& newton, WorkerPool* pool = nullptr);

/// Dataset accuracy under the sequential forward pass.
double evaluate_accuracy(const ResNetClassifier& model, const Dataset& data,
                         WorkerPool* pool = nullptr);

/// Per-sample parameter gradients of the classifier loss, computed either
/// sequentially or through the PCR path; shared by training and the
/// gradient-parity checks. Returns body grads, head grads and the per-sample
/// loss; newton_iters reports the forward solve cost in DeepPCR mode.
struct SampleGrads {
  LayerGrads body;
  Matrix head_weight;
  Vector head_bias;
  double loss = 0.0;
  int predicted = 0;
  int newton_iters = 0;
};

SampleGrads sample_gradients(const ResNetClassifier& model, const Vector& input, int label,
                             TrainMode mode, const NewtonConfig& newton,
                             const std::vector<Vector>* warm_start,
                             std::vector<Vector>* macro_states_out);

}  // namespace deeppcr
