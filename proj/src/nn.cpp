#include "deeppcr/nn.hpp"

#include "deeppcr/linalg.hpp"
#include "deeppcr/rng.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace deeppcr {
namespace {

using Clock = std::chrono::steady_clock;

std::int64_t ns_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
}

int argmax(const Vector& v) {
  Eigen::Index idx = 0;
  v.maxCoeff(&idx);
  return static_cast<int>(idx);
}

struct ForwardResult {
  std::vector<Vector> layer_states;  // z_0..z_n at every body layer
  std::vector<Vector> macro_states;  // block-boundary states z_0, z_s, ..., z_n
  Vector head_input;                 // activated body output feeding the head
  Vector logits_grad;
  double loss = 0.0;
  int predicted = 0;
  int newton_iters = 0;
};

// Gradient accumulator shaped like the model.
struct GradAccum {
  LayerGrads body;
  Matrix head_weight;
  Vector head_bias;

  explicit GradAccum(const ResNetClassifier& model) {
    const MlpParams& mlp = model.body.mlp;
    body.weights.resize(mlp.layer_count());
    body.biases.resize(mlp.layer_count());
    for (int l = 0; l < mlp.layer_count(); ++l) {
      body.weights[l] = Matrix::Zero(mlp.weights[l].rows(), mlp.weights[l].cols());
      body.biases[l] = Vector::Zero(mlp.biases[l].size());
    }
    head_weight = Matrix::Zero(model.head_weight.rows(), model.head_weight.cols());
    head_bias = Vector::Zero(model.head_bias.size());
  }

  void add(const GradAccum& other) {
    for (std::size_t l = 0; l < body.weights.size(); ++l) {
      body.weights[l] += other.body.weights[l];
      body.biases[l] += other.body.biases[l];
    }
    head_weight += other.head_weight;
    head_bias += other.head_bias;
  }

  void scale(double f) {
    for (std::size_t l = 0; l < body.weights.size(); ++l) {
      body.weights[l] *= f;
      body.biases[l] *= f;
    }
    head_weight *= f;
    head_bias *= f;
  }
};

void eval_head(const ResNetClassifier& model, const Vector& body_out, int label,
               ForwardResult& fwd) {
  fwd.head_input.resize(body_out.size());
  activate(model.head_activation, body_out, fwd.head_input);
  Vector logits = model.head_weight * fwd.head_input + model.head_bias;
  SoftmaxXent xent = softmax_xent(logits, label);
  fwd.loss = xent.loss;
  fwd.logits_grad = std::move(xent.grad_logits);
  fwd.predicted = argmax(logits);
}

// Gradient w.r.t. the body output, pulled back through the head.
Vector body_output_grad(const ResNetClassifier& model, const Vector& body_out,
                        const ForwardResult& fwd) {
  Vector deriv(body_out.size());
  activate_deriv(model.head_activation, body_out, deriv);
  Vector g = model.head_weight.transpose() * fwd.logits_grad;
  g.array() *= deriv.array();
  return g;
}

ForwardResult forward_one(const ResNetClassifier& model, const Vector& input, int label,
                          TrainMode mode, const NewtonConfig& newton,
                          const std::vector<Vector>* warm_start) {
  const ResNetParams& body = model.body;
  const int n = body.inner_layers();
  const int s = body.skip_length;
  const int blocks = body.block_count();
  ForwardResult fwd;

  if (mode == TrainMode::kSequential) {
    fwd.layer_states = resnet_layer_rollout(body, input);
    fwd.macro_states.resize(blocks + 1);
    for (int m = 0; m <= blocks; ++m) fwd.macro_states[m] = fwd.layer_states[m * s];
  } else {
    ResNetCollapsedSequence seq(body, input);
    std::vector<Vector> guess;
    if (warm_start != nullptr && static_cast<int>(warm_start->size()) == blocks + 1) {
      guess.resize(blocks + 1);
      guess[0] = seq.initial_value();
      for (int m = 1; m <= blocks; ++m) guess[m] = (*warm_start)[m];
    } else {
      guess = first_layer_copy_guess(seq);
    }
    auto [macro, report] = newton_solve(seq, guess, newton, nullptr);
    fwd.newton_iters = report.iterations;
    fwd.macro_states = std::move(macro);
    // Recover the intra-block activations from the converged boundaries; the
    // adjoint and parameter gradients are evaluated at these states.
    fwd.layer_states.resize(n + 1);
    fwd.layer_states[0] = fwd.macro_states[0];
    Vector act(body.width());
    for (int m = 1; m <= blocks; ++m) {
      Vector v = fwd.macro_states[m - 1];
      for (int l = (m - 1) * s + 1; l < m * s; ++l) {
        activate(body.mlp.activations[l], v, act);
        Vector next = body.mlp.weights[l] * act + body.mlp.biases[l];
        v = std::move(next);
        fwd.layer_states[l] = v;
      }
      // The block boundary takes the solver's state, which is what the
      // adjoint system is linearized at.
      fwd.layer_states[m * s] = fwd.macro_states[m];
    }
  }
  eval_head(model, fwd.layer_states[n], label, fwd);
  return fwd;
}

void backward_one(const ResNetClassifier& model, const Vector& input, TrainMode mode,
                  const ForwardResult& fwd, GradAccum& accum) {
  const ResNetParams& body = model.body;
  const int n = body.inner_layers();
  const int s = body.skip_length;
  const int blocks = body.block_count();
  const int w = body.width();

  const Vector top_grad = body_output_grad(model, fwd.layer_states[n], fwd);

  std::vector<Vector> state_grads;
  if (mode == TrainMode::kSequential) {
    state_grads = resnet_layer_backprop(body, fwd.layer_states, top_grad);
  } else {
    // Adjoint over the macro blocks: linear, so a single PCR solve. Row k of
    // the system carries the gradient w.r.t. the state at block blocks-k.
    ResNetCollapsedSequence seq(body, input);
    BlockBidiagSystem adjoint;
    adjoint.state_dims.assign(blocks + 1, w);
    adjoint.sub_ops.resize(blocks + 1);
    adjoint.rhs.resize(blocks + 1);
    adjoint.rhs[0] = top_grad;
    for (int k = 1; k <= blocks; ++k) {
      const int m = blocks - k + 1;
      adjoint.sub_ops[k] = -seq.step_jacobian(m, fwd.macro_states[m - 1]).transpose();
      adjoint.rhs[k] = Vector::Zero(w);
    }
    auto [macro_grads_rev, trace] = pcr_solve(adjoint, nullptr);
    (void)trace;

    // Inner-layer adjoints: chain down within each block from its boundary
    // gradient; inner states have no skip path.
    state_grads.assign(n + 1, Vector());
    for (int m = 0; m <= blocks; ++m) state_grads[m * s] = macro_grads_rev[blocks - m];
    Vector deriv(w);
    for (int m = 1; m <= blocks; ++m) {
      Vector g = state_grads[m * s];
      for (int l = m * s; l > (m - 1) * s + 1; --l) {
        const Vector& z = fwd.layer_states[l - 1];
        activate_deriv(body.mlp.activations[l], z, deriv);
        Vector prev = body.mlp.weights[l].transpose() * g;
        prev.array() *= deriv.array();
        state_grads[l - 1] = std::move(prev);
        g = state_grads[l - 1];
      }
    }
  }

  LayerGrads body_grads = param_gradients(body.mlp, input, fwd.layer_states, state_grads);
  for (int l = 0; l < body.mlp.layer_count(); ++l) {
    accum.body.weights[l] += body_grads.weights[l];
    accum.body.biases[l] += body_grads.biases[l];
  }
  accum.head_weight += fwd.logits_grad * fwd.head_input.transpose();
  accum.head_bias += fwd.logits_grad;
}

}  // namespace

void SgdConfig::validate() const {
  // Zero is tolerated so no-op training runs are expressible.
  if (!(learning_rate >= 0.0)) throw ShapeError("sgd: learning_rate must not be negative");
  if (epochs < 1) throw ShapeError("sgd: epochs must be >= 1");
  if (batch_size < 1) throw ShapeError("sgd: batch_size must be >= 1");
}

MlpParams init_params(const std::vector<int>& widths, const std::vector<Activation>& activations,
                      std::uint64_t seed) {
  if (widths.size() < 2) throw ShapeError("init_params: need at least input and output widths");
  if (activations.size() != widths.size() - 1) {
    throw ShapeError("init_params: need one activation tag per layer");
  }
  for (int w : widths) {
    if (w < 1) throw ShapeError("init_params: widths must be >= 1");
  }
  Rng rng(seed);
  MlpParams params;
  const int layers = static_cast<int>(widths.size()) - 1;
  params.weights.resize(layers);
  params.biases.resize(layers);
  params.activations = activations;
  for (int l = 0; l < layers; ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    // Kaiming for ReLU-fed layers (variance 2/fan_in), Glorot otherwise.
    const double bound = activations[l] == Activation::kRelu
                             ? std::sqrt(6.0 / fan_in)
                             : std::sqrt(6.0 / (fan_in + fan_out));
    params.weights[l] = rng.uniform_matrix(fan_out, fan_in, -bound, bound);
    params.biases[l] = Vector::Zero(fan_out);
  }
  return params;
}

MlpParams init_params_fanin_uniform(const std::vector<int>& widths,
                                    const std::vector<Activation>& activations,
                                    std::uint64_t seed) {
  if (widths.size() < 2) throw ShapeError("init_params: need at least input and output widths");
  if (activations.size() != widths.size() - 1) {
    throw ShapeError("init_params: need one activation tag per layer");
  }
  Rng rng(seed);
  MlpParams params;
  const int layers = static_cast<int>(widths.size()) - 1;
  params.weights.resize(layers);
  params.biases.resize(layers);
  params.activations = activations;
  for (int l = 0; l < layers; ++l) {
    if (widths[l] < 1 || widths[l + 1] < 1) throw ShapeError("init_params: widths must be >= 1");
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    params.weights[l] = rng.uniform_matrix(widths[l + 1], widths[l], -bound, bound);
    params.biases[l] = rng.uniform_vector(widths[l + 1], -bound, bound);
  }
  return params;
}

SoftmaxXent softmax_xent(const Vector& logits, int label) {
  if (label < 0 || label >= logits.size()) {
    throw ShapeError("softmax_xent: label out of range");
  }
  const double m = logits.maxCoeff();
  Vector shifted = logits.array() - m;
  Vector exps = shifted.array().exp();
  const double total = exps.sum();
  SoftmaxXent out;
  out.loss = std::log(total) - shifted[label];
  out.grad_logits = exps / total;
  out.grad_logits[label] -= 1.0;
  return out;
}

void sgd_step_inplace(MlpParams& params, const LayerGrads& grads, double lr) {
  if (grads.weights.size() != params.weights.size() ||
      grads.biases.size() != params.biases.size()) {
    throw ShapeError("sgd_step: gradient layer count mismatch");
  }
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    if (grads.weights[l].rows() != params.weights[l].rows() ||
        grads.weights[l].cols() != params.weights[l].cols() ||
        grads.biases[l].size() != params.biases[l].size()) {
      throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
    }
    params.weights[l] -= lr * grads.weights[l];
    params.biases[l] -= lr * grads.biases[l];
  }
}

MlpParams sgd_step(const MlpParams& params, const LayerGrads& grads, double lr) {
  MlpParams out = params;
  sgd_step_inplace(out, grads, lr);
  return out;
}

const char* to_string(TrainMode mode) {
  return mode == TrainMode::kSequential ? "sequential" : "deeppcr";
}

void ResNetClassifier::validate() const {
  body.validate();
  if (head_weight.cols() != body.width() || head_bias.size() != head_weight.rows()) {
    throw ShapeError("classifier: head does not match the body width");
  }
}

ResNetClassifier init_resnet_classifier(int input_dim, int width, int inner_layers,
                                        int skip_length, int classes, Activation activation,
                                        std::uint64_t seed) {
  std::vector<int> widths(inner_layers + 2, width);
  widths[0] = input_dim;
  std::vector<Activation> acts(inner_layers + 1, activation);
  acts[0] = Activation::kIdentity;  // layer 0 consumes the raw input

  ResNetClassifier model;
  model.body.mlp = init_params(widths, acts, mix_seed(seed, 1));
  model.body.skip_length = skip_length;

  // Depth-aware damping of the residual branches: per-layer Kaiming/Glorot
  // keeps each branch at unit gain, so plain additions would double the state
  // variance per block and the chain would grow exponentially with depth.
  // Scaling the block layers caps the total gain at roughly
  // (1 + 1/(2M))^M <= sqrt(e) for M blocks.
  const int blocks = inner_layers / skip_length;
  const double branch_scale = std::pow(2.0 * blocks, -1.0 / (2.0 * skip_length));
  for (int l = 1; l <= inner_layers; ++l) {
    model.body.mlp.weights[l] *= branch_scale;
  }

  MlpParams head = init_params({width, classes}, {activation}, mix_seed(seed, 2));
  model.head_weight = std::move(head.weights[0]);
  model.head_bias = std::move(head.biases[0]);
  model.head_activation = activation;
  model.validate();
  return model;
}

SampleGrads sample_gradients(const ResNetClassifier& model, const Vector& input, int label,
                             TrainMode mode, const NewtonConfig& newton,
                             const std::vector<Vector>* warm_start,
                             std::vector<Vector>* macro_states_out) {
  ForwardResult fwd = forward_one(model, input, label, mode, newton, warm_start);
  GradAccum accum(model);
  backward_one(model, input, mode, fwd, accum);
  if (macro_states_out != nullptr) *macro_states_out = fwd.macro_states;
  SampleGrads out;
  out.body = std::move(accum.body);
  out.head_weight = std::move(accum.head_weight);
  out.head_bias = std::move(accum.head_bias);
  out.loss = fwd.loss;
  out.predicted = fwd.predicted;
  out.newton_iters = fwd.newton_iters;
  return out;
}

std::pair<ResNetClassifier, std::vector<TrainLogRow>> train_resnet(
    ResNetClassifier model, const Dataset& data, const SgdConfig& sgd, TrainMode mode,
    const NewtonConfig& newton, WorkerPool* pool) {
  model.validate();
  sgd.validate();
  newton.validate();
  data.validate();
  if (data.size() == 0) throw ShapeError("train: dataset is empty");
  if (data.feature_dim != model.body.mlp.input_dim()) {
    throw ShapeError("train: dataset feature dim does not match the model");
  }

  const int blocks = model.body.block_count();
  const int count = data.size();
  const int grad_chunks = 16;
  std::vector<TrainLogRow> log;
  Rng shuffle_rng(mix_seed(sgd.seed, 0xb47c));

  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);

  // Batch-mean block states from the previous step (App-F-style warm start).
  std::vector<Vector> warm;
  bool have_warm = false;

  int step = 0;
  for (int epoch = 0; epoch < sgd.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (int start = 0; start < count; start += sgd.batch_size, ++step) {
      const int bsz = std::min(sgd.batch_size, count - start);
      std::vector<ForwardResult> fwd(bsz);

      auto t0 = Clock::now();
      auto fwd_body = [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) {
          const int sample = order[start + i];
          fwd[i] = forward_one(model, data.samples[sample], data.labels[sample], mode, newton,
                               have_warm ? &warm : nullptr);
        }
      };
      try {
        if (pool != nullptr && pool->workers() > 1) {
          pool->parallel_ranges(bsz, fwd_body);
        } else {
          fwd_body(0, bsz);
        }
      } catch (const DivergenceError& e) {
        // Abort the run, leaving a row that names the failing batch.
        TrainLogRow row;
        row.step = step;
        row.epoch = epoch;
        row.mode = mode;
        row.loss = std::numeric_limits<double>::quiet_NaN();
        row.accuracy = 0.0;
        row.fwd_time_ns = ns_since(t0);
        row.newton_iters = -e.iteration();
        log.push_back(row);
        return {std::move(model), std::move(log)};
      }
      const std::int64_t fwd_ns = ns_since(t0);

      auto t1 = Clock::now();
      std::vector<GradAccum> partial(grad_chunks, GradAccum(model));
      auto bwd_body = [&](int chunk, std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) {
          const int sample = order[start + i];
          backward_one(model, data.samples[sample], mode, fwd[i], partial[chunk]);
        }
      };
      if (pool != nullptr && pool->workers() > 1) {
        pool->parallel_chunks(bsz, grad_chunks, bwd_body);
      } else {
        auto ranges = split_ranges(bsz, grad_chunks);
        for (std::size_t c = 0; c < ranges.size(); ++c) {
          bwd_body(static_cast<int>(c), ranges[c].first, ranges[c].second);
        }
      }
      GradAccum total = std::move(partial[0]);
      for (int c = 1; c < grad_chunks; ++c) total.add(partial[c]);
      total.scale(1.0 / bsz);
      const std::int64_t bwd_ns = ns_since(t1);

      sgd_step_inplace(model.body.mlp, total.body, sgd.learning_rate);
      model.head_weight -= sgd.learning_rate * total.head_weight;
      model.head_bias -= sgd.learning_rate * total.head_bias;

      double loss_sum = 0.0;
      int correct = 0;
      int max_newton = 0;
      for (int i = 0; i < bsz; ++i) {
        loss_sum += fwd[i].loss;
        if (fwd[i].predicted == data.labels[order[start + i]]) ++correct;
        max_newton = std::max(max_newton, fwd[i].newton_iters);
      }

      if (mode == TrainMode::kDeepPcr) {
        warm.assign(blocks + 1, Vector::Zero(model.body.width()));
        for (int i = 0; i < bsz; ++i) {
          for (int m = 0; m <= blocks; ++m) warm[m] += fwd[i].macro_states[m];
        }
        for (int m = 0; m <= blocks; ++m) warm[m] /= bsz;
        have_warm = true;
      }

      TrainLogRow row;
      row.step = step;
      row.epoch = epoch;
      row.mode = mode;
      row.loss = loss_sum / bsz;
      row.accuracy = static_cast<double>(correct) / bsz;
      row.fwd_time_ns = fwd_ns;
      row.bwd_time_ns = bwd_ns;
      row.newton_iters = max_newton;
      log.push_back(row);
    }
  }
  return {std::move(model), std::move(log)};
}

double evaluate_accuracy(const ResNetClassifier& model, const Dataset& data, WorkerPool* pool) {
  model.validate();
  const int count = data.size();
  if (count == 0) return 0.0;
  std::vector<std::uint8_t> hit(count, 0);
  auto body = [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) {
      std::vector<Vector> states = resnet_layer_rollout(model.body, data.samples[i]);
      Vector act(states.back().size());
      activate(model.head_activation, states.back(), act);
      Vector logits = model.head_weight * act + model.head_bias;
      hit[i] = argmax(logits) == data.labels[i] ? 1 : 0;
    }
  };
  if (pool != nullptr && pool->workers() > 1) {
    pool->parallel_ranges(count, body);
  } else {
    body(0, count);
  }
  int correct = 0;
  for (std::uint8_t h : hit) correct += h;
  return static_cast<double>(correct) / count;
}

}  // namespace deeppcr
