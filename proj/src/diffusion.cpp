#include "deeppcr/diffusion.hpp"

#include "deeppcr/rng.hpp"

#include <cmath>

namespace deeppcr {

void NoiseSchedule::validate() const {
  const int L = length();
  if (betas.size() != L || alpha_bars.size() != L) {
    throw ShapeError("noise schedule: alphas, betas, alpha_bars must share length");
  }
  double prev_bar = 1.0;
  for (int l = 0; l < L; ++l) {
    if (betas[l] < 0.0) throw ShapeError("noise schedule: beta must be >= 0");
    if (!(alphas[l] > 0.0 && alphas[l] <= 1.0)) {
      throw ShapeError("noise schedule: alpha must lie in (0,1]");
    }
    if (std::abs(alphas[l] - (1.0 - betas[l])) > 1e-15) {
      throw ShapeError("noise schedule: alpha_l must equal 1 - beta_l");
    }
    if (!(alpha_bars[l] > 0.0 && alpha_bars[l] <= 1.0) || alpha_bars[l] > prev_bar) {
      throw ShapeError("noise schedule: alpha_bar must be non-increasing in (0,1]");
    }
    prev_bar = alpha_bars[l];
  }
}

NoiseSchedule NoiseSchedule::linear_beta(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ShapeError("noise schedule: steps must be >= 1");
  NoiseSchedule s;
  s.betas.resize(steps);
  s.alphas.resize(steps);
  s.alpha_bars.resize(steps);
  double bar = 1.0;
  for (int l = 0; l < steps; ++l) {
    const double t = steps == 1 ? 0.0 : static_cast<double>(l) / (steps - 1);
    s.betas[l] = beta_start + t * (beta_end - beta_start);
    s.alphas[l] = 1.0 - s.betas[l];
    bar *= s.alphas[l];
    s.alpha_bars[l] = bar;
  }
  return s;
}

NoiseTape NoiseTape::sample(int steps, int dim, std::uint64_t seed) {
  NoiseTape tape;
  tape.seed = seed;
  tape.draws.resize(steps);
  Rng rng(seed);
  for (int l = 0; l < steps; ++l) tape.draws[l] = rng.gaussian_vector(dim);
  return tape;
}

NoiseTape NoiseTape::zeros(int steps, int dim) {
  NoiseTape tape;
  tape.draws.assign(steps, Vector::Zero(dim));
  return tape;
}

Denoiser Denoiser::random(int dim, int hidden, std::uint64_t seed) {
  if (dim < 1 || hidden < 1) throw ShapeError("denoiser: dims must be >= 1");
  Denoiser d;
  d.dim = dim;
  Rng rng(seed);
  // Glorot-style bounds, with the output layer shrunk so the MLP branch
  // stays subordinate to the skip path and every denoising step contracts.
  const double b1 = std::sqrt(6.0 / (dim + hidden));
  const double b2 = 0.5 * std::sqrt(6.0 / (hidden + dim));
  d.net.weights.push_back(rng.uniform_matrix(hidden, dim, -b1, b1));
  d.net.weights.push_back(rng.uniform_matrix(dim, hidden, -b2, b2));
  d.net.biases.push_back(Vector::Zero(hidden));
  d.net.biases.push_back(Vector::Zero(dim));
  d.net.activations = {Activation::kIdentity, Activation::kTanh};
  return d;
}

Denoiser Denoiser::zero(int dim) {
  Denoiser d = Denoiser::random(dim, 1, 0);
  d.output_scale = 0.0;
  return d;
}

Vector Denoiser::embedding(int l) const {
  Vector e(dim);
  for (int i = 0; i < dim; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
    e[i] = (i % 2 == 0) ? std::sin(l * freq) : std::cos(l * freq);
  }
  return e;
}

void Denoiser::eval(ConstVectorRef z, int l, VectorRef out) const {
  eval_with(z, embedding(l), out);
}

void Denoiser::jacobian(ConstVectorRef z, int l, MatrixRef out) const {
  jacobian_with(z, embedding(l), out);
}

void Denoiser::eval_with(ConstVectorRef z, ConstVectorRef emb, VectorRef out) const {
  if (is_zero()) {
    out.setZero();
    return;
  }
  static thread_local Vector u, h, a;
  u = z + emb;
  h.noalias() = net.weights[0] * u;
  h += net.biases[0];
  a.resize(h.size());
  activate(Activation::kTanh, h, a);
  out.noalias() = net.weights[1] * a;
  out += net.biases[1] + u;
  out *= output_scale;
}

void Denoiser::jacobian_with(ConstVectorRef z, ConstVectorRef emb, MatrixRef out) const {
  if (is_zero()) {
    out.setZero();
    return;
  }
  static thread_local Vector u, h, deriv;
  static thread_local Matrix inner;
  u = z + emb;
  h.noalias() = net.weights[0] * u;
  h += net.biases[0];
  deriv.resize(h.size());
  activate_deriv(Activation::kTanh, h, deriv);
  inner = net.weights[0];
  inner.array().colwise() *= deriv.array();
  out.noalias() = net.weights[1] * inner;
  out.diagonal().array() += 1.0;
  out *= output_scale;
}

DiffusionSequence::DiffusionSequence(const Denoiser& denoiser, const NoiseSchedule& schedule,
                                     const NoiseTape& tape, Vector z_init)
    : denoiser_(&denoiser), schedule_(&schedule), tape_(&tape), z_init_(std::move(z_init)) {
  schedule.validate();
  if (tape.length() != schedule.length()) {
    throw ShapeError("diffusion: tape length " + std::to_string(tape.length()) +
                     " does not match schedule length " + std::to_string(schedule.length()));
  }
  for (const Vector& draw : tape.draws) {
    if (draw.size() != z_init_.size()) {
      throw ShapeError("diffusion: tape draws must match the state dimension");
    }
  }
  if (!denoiser.is_zero() && denoiser.dim != z_init_.size()) {
    throw ShapeError("diffusion: denoiser dimension does not match the state");
  }
  if (!denoiser.is_zero()) {
    embeddings_.resize(schedule.length());
    for (int l = 1; l <= schedule.length(); ++l) {
      embeddings_[l - 1] = denoiser.embedding(l);
    }
  }
}

double DiffusionSequence::coeff(int l) const {
  const double beta = schedule_->betas[l - 1];
  if (beta == 0.0) return 0.0;  // numerator 1 - alpha_l vanishes
  return beta / std::sqrt(1.0 - schedule_->alpha_bars[l - 1]);
}

void DiffusionSequence::eval_initial(VectorRef out) const { out = z_init_; }

void DiffusionSequence::eval_step(int l, ConstVectorRef z_prev, VectorRef out) const {
  const double c = coeff(l);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule_->alphas[l - 1]);
  if (c != 0.0 && !denoiser_->is_zero()) {
    denoiser_->eval_with(z_prev, embeddings_[l - 1], out);
    out = (z_prev - c * out) * inv_sqrt_alpha;
  } else {
    out = z_prev * inv_sqrt_alpha;
  }
  const double beta = schedule_->betas[l - 1];
  if (beta > 0.0) out += std::sqrt(beta) * tape_->draws[l - 1];
}

void DiffusionSequence::eval_jacobian(int l, ConstVectorRef z_prev, MatrixRef out) const {
  const double c = coeff(l);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule_->alphas[l - 1]);
  if (c != 0.0 && !denoiser_->is_zero()) {
    denoiser_->jacobian_with(z_prev, embeddings_[l - 1], out);
    out *= -c;
  } else {
    out.setZero();
  }
  out.diagonal().array() += 1.0;
  out *= inv_sqrt_alpha;
}

DiffusionSequence diffusion_sequence(const Denoiser& denoiser, const NoiseSchedule& schedule,
                                     const NoiseTape& tape, Vector z_init) {
  return DiffusionSequence(denoiser, schedule, tape, z_init);
}

}  // namespace deeppcr
