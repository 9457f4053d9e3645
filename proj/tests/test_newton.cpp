#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "deeppcr/newton.hpp"
#include "deeppcr/nn.hpp"
#include "deeppcr/rng.hpp"

#include <cmath>

using namespace deeppcr;

namespace {

// Scalar affine chain z_l = a_l * z_{l-1} + c_l, handy for hand computation.
class ScalarAffineSequence final : public MarkovSequence {
 public:
  ScalarAffineSequence(double init, std::vector<double> slopes, std::vector<double> offsets)
      : init_(init), slopes_(std::move(slopes)), offsets_(std::move(offsets)) {}

  int length() const override { return static_cast<int>(slopes_.size()); }
  int state_dim(int) const override { return 1; }
  bool is_linear() const override { return true; }
  void eval_initial(VectorRef out) const override { out[0] = init_; }
  void eval_step(int l, ConstVectorRef z, VectorRef out) const override {
    out[0] = slopes_[l - 1] * z[0] + offsets_[l - 1];
  }
  void eval_jacobian(int l, ConstVectorRef, MatrixRef out) const override {
    out(0, 0) = slopes_[l - 1];
  }

 private:
  double init_;
  std::vector<double> slopes_;
  std::vector<double> offsets_;
};

// A cubic map whose Newton iteration from a bad guess blows up.
class DivergingSequence final : public MarkovSequence {
 public:
  int length() const override { return 2; }
  int state_dim(int) const override { return 1; }
  void eval_initial(VectorRef out) const override { out[0] = 1.0; }
  void eval_step(int, ConstVectorRef z, VectorRef out) const override {
    out[0] = z[0] * z[0] * z[0];
  }
  void eval_jacobian(int, ConstVectorRef z, MatrixRef out) const override {
    out(0, 0) = 3.0 * z[0] * z[0];
  }
};

MlpParams random_mlp(int width, int layers, Activation act, std::uint64_t seed) {
  std::vector<int> widths(layers + 1, width);
  std::vector<Activation> acts(layers, act);
  acts[0] = Activation::kIdentity;
  return init_params(widths, acts, seed);
}

}  // namespace

TEST_CASE("residual is zero on the exact trajectory") {
  Rng rng(1);
  MlpParams params = random_mlp(4, 6, Activation::kTanh, 11);
  MlpForwardSequence seq(params, rng.gaussian_vector(4));
  auto z = sequential_rollout(seq);
  for (const Vector& block : residual(seq, z)) {
    CHECK(block.cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("residual of identity steps at the initial value is zero") {
  ScalarAffineSequence seq(0.7, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0});
  std::vector<Vector> z(4, Vector::Constant(1, 0.7));
  for (const Vector& block : residual(seq, z)) {
    CHECK(block.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("residual blocks match hand-computed f_l(z_{l-1}) - z_l on a 3-step chain") {
  ScalarAffineSequence seq(2.0, {0.5, -1.0, 3.0}, {1.0, 0.25, -2.0});
  Rng rng(3);
  std::vector<Vector> z(4);
  for (auto& v : z) v = rng.uniform_vector(1, -2, 2);
  auto r = residual(seq, z);
  CHECK(r[0][0] == 2.0 - z[0][0]);
  CHECK(r[1][0] == (0.5 * z[0][0] + 1.0) - z[1][0]);
  CHECK(r[2][0] == (-1.0 * z[1][0] + 0.25) - z[2][0]);
  CHECK(r[3][0] == (3.0 * z[2][0] - 2.0) - z[3][0]);
}

TEST_CASE("assembled system: constant Jacobian for linear maps, zero rhs at the trajectory") {
  ScalarAffineSequence seq(1.0, {2.0, -0.5}, {0.3, 0.1});
  Rng rng(4);
  std::vector<Vector> z(3);
  for (auto& v : z) v = rng.uniform_vector(1, -1, 1);
  auto system = assemble_linearized_system(seq, z);
  CHECK(system.sub_ops[1](0, 0) == -2.0);   // negated Jacobian
  CHECK(system.sub_ops[2](0, 0) == 0.5);
  auto traj = sequential_rollout(seq);
  auto at_solution = assemble_linearized_system(seq, traj);
  for (int l = 0; l <= 2; ++l) {
    CHECK(at_solution.rhs[l].cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("assembled MLP Jacobian equals -W diag(sigma') and matches finite differences") {
  Rng rng(5);
  MlpParams params = random_mlp(5, 4, Activation::kSigmoid, 21);
  MlpForwardSequence seq(params, rng.gaussian_vector(5));
  std::vector<Vector> z(seq.length() + 1);
  for (int l = 0; l <= seq.length(); ++l) z[l] = rng.gaussian_vector(5);
  auto system = assemble_linearized_system(seq, z);
  for (int l = 1; l <= seq.length(); ++l) {
    // Explicit formula.
    Matrix expect = params.weights[l];
    for (int j = 0; j < 5; ++j) {
      expect.col(j) *= activate_deriv(Activation::kSigmoid, z[l - 1][j]);
    }
    CHECK((system.sub_ops[l] + expect).cwiseAbs().maxCoeff() <= 1e-14);
    // Central finite differences, h = 1e-6.
    const double h = 1e-6;
    for (int j = 0; j < 5; ++j) {
      Vector zp = z[l - 1], zm = z[l - 1];
      zp[j] += h;
      zm[j] -= h;
      Vector col = (seq.step(l, zp) - seq.step(l, zm)) / (2 * h);
      CHECK((col + system.sub_ops[l].col(j)).cwiseAbs().maxCoeff() <= 1e-5);
    }
  }
}

TEST_CASE("one-shot convergence on affine sequences from any start") {
  Rng rng(6);
  ScalarAffineSequence seq(0.5, {1.5, -0.7, 0.9, 2.0}, {0.1, 0.2, -0.3, 0.4});
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vector> z0(5);
    for (auto& v : z0) v = rng.uniform_vector(1, -100, 100);
    auto [z, report] = newton_solve(seq, z0, NewtonConfig::forward_pass_defaults());
    CHECK(report.iterations == 1);
    CHECK(report.converged);
    CHECK(report.final_residual <= 1e-12);
    auto traj = sequential_rollout(seq);
    for (int l = 0; l <= 4; ++l) {
      CHECK(std::abs(z[l][0] - traj[l][0]) <=
            1e-10 * std::max(1.0, std::abs(traj[l][0])));
    }
  }
}

TEST_CASE("exact trajectory converges in one iteration with zero update") {
  Rng rng(7);
  MlpParams params = random_mlp(4, 8, Activation::kTanh, 31);
  MlpForwardSequence seq(params, rng.gaussian_vector(4));
  auto z0 = sequential_rollout(seq);
  auto [z, report] = newton_solve(seq, z0, NewtonConfig::forward_pass_defaults());
  CHECK(report.iterations == 1);
  CHECK(report.converged);
  CHECK(report.stop_reason == StopReason::kAbsTol);
  for (int l = 0; l <= seq.length(); ++l) {
    CHECK(bits_equal(z[l], z0[l]));  // the applied update was exactly zero
  }
}

TEST_CASE("ReLU MLP forward pass converges within six iterations") {
  Rng rng(8);
  for (int L : {64, 128}) {
    for (int w : {2, 8}) {
      std::vector<int> widths(L + 2, w);
      std::vector<Activation> acts(L + 1, Activation::kRelu);
      acts[0] = Activation::kIdentity;
      MlpParams params = init_params_fanin_uniform(widths, acts, mix_seed(77, L, w));
      MlpForwardSequence seq(params, rng.gaussian_vector(w));
      auto guess = first_layer_copy_guess(seq);
      auto [z, report] = newton_solve(seq, guess, NewtonConfig::forward_pass_defaults());
      INFO("L=", L, " w=", w, " iters=", report.iterations);
      CHECK(report.converged);
      CHECK(report.iterations <= 6);
      auto traj = sequential_rollout(seq);
      CHECK((z[L] - traj[L]).norm() <= 1e-4);
    }
  }
}

TEST_CASE("residual history is recorded per iteration and converged implies tolerance") {
  Rng rng(9);
  MlpParams params = random_mlp(6, 12, Activation::kTanh, 41);
  MlpForwardSequence seq(params, rng.gaussian_vector(6));
  auto guess = first_layer_copy_guess(seq);
  auto [z, report] = newton_solve(seq, guess, NewtonConfig::forward_pass_defaults());
  CHECK(report.converged);
  CHECK(static_cast<int>(report.residual_history.size()) == report.iterations);
  CHECK(report.final_residual <= 1e-4);
  // Pre-update convention: the history entry that fired satisfies tolerance.
  CHECK(report.residual_history.back() <= 1e-4);
}

TEST_CASE("fixed_iters runs exactly k iterations and reports fixed_iters") {
  Rng rng(10);
  MlpParams params = random_mlp(4, 10, Activation::kTanh, 51);
  MlpForwardSequence seq(params, rng.gaussian_vector(4));
  NewtonConfig config = NewtonConfig::forward_pass_defaults();
  config.fixed_iters = 3;
  auto guess = first_layer_copy_guess(seq);
  auto [z, report] = newton_solve(seq, guess, config);
  CHECK(report.iterations == 3);
  CHECK(report.stop_reason == StopReason::kFixedIters);
  CHECK(static_cast<int>(report.residual_history.size()) == 3);
}

TEST_CASE("max_iters exhaustion reports not converged") {
  Rng rng(11);
  MlpParams params = random_mlp(6, 20, Activation::kTanh, 61);
  MlpForwardSequence seq(params, rng.gaussian_vector(6));
  NewtonConfig config{1, 1e-14, 1e-14, {}};
  auto guess = first_layer_copy_guess(seq);
  auto [z, report] = newton_solve(seq, guess, config);
  CHECK(!report.converged);
  CHECK(report.stop_reason == StopReason::kMaxIters);
  CHECK(report.iterations == 1);
}

TEST_CASE("divergence raises with the iteration index") {
  DivergingSequence seq;
  std::vector<Vector> z0(3, Vector::Constant(1, 1e8));
  NewtonConfig config{50, 1e-8, 1e-8, {}};
  CHECK_THROWS_AS(newton_solve(seq, z0, config), DivergenceError);
  try {
    newton_solve(seq, z0, config);
  } catch (const DivergenceError& e) {
    CHECK(e.iteration() >= 1);
  }
}

TEST_CASE("config validation") {
  NewtonConfig bad = NewtonConfig::forward_pass_defaults();
  bad.max_iters = 0;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = NewtonConfig::forward_pass_defaults();
  bad.abs_tol = 0.0;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = NewtonConfig::forward_pass_defaults();
  bad.fixed_iters = 0;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  CHECK(NewtonConfig::forward_pass_defaults().max_iters == 15);
  CHECK(NewtonConfig::diffusion_defaults().max_iters == 30);
  CHECK(NewtonConfig::forward_pass_defaults().abs_tol == 1e-4);
  CHECK(NewtonConfig::forward_pass_defaults().rel_tol == 1e-4);
}

TEST_CASE("rectangular state dims flow through assembly and the solve") {
  Rng rng(13);
  std::vector<int> widths = {3, 5, 4, 2, 6, 2};
  std::vector<Activation> acts(widths.size() - 1, Activation::kTanh);
  acts[0] = Activation::kIdentity;
  MlpParams params = init_params(widths, acts, 81);
  MlpForwardSequence seq(params, rng.gaussian_vector(3));
  auto traj = sequential_rollout(seq);
  auto [z, report] = newton_solve(seq, first_layer_copy_guess(seq),
                                  NewtonConfig::forward_pass_defaults());
  CHECK(report.converged);
  for (int l = 0; l <= seq.length(); ++l) {
    CHECK((z[l] - traj[l]).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("newton output is bitwise identical across worker counts") {
  Rng rng(12);
  MlpParams params = random_mlp(5, 30, Activation::kRelu, 71);
  MlpForwardSequence seq(params, rng.gaussian_vector(5));
  auto guess = first_layer_copy_guess(seq);
  auto [base, rep0] = newton_solve(seq, guess, NewtonConfig::forward_pass_defaults(), nullptr);
  for (int workers : {2, 4, 8}) {
    WorkerPool pool(workers);
    auto [z, report] = newton_solve(seq, guess, NewtonConfig::forward_pass_defaults(), &pool);
    CHECK(report.iterations == rep0.iterations);
    for (std::size_t l = 0; l < z.size(); ++l) CHECK(bits_equal(z[l], base[l]));
  }
}
