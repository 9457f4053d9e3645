#include "deeppcr/verify.hpp"

#include "deeppcr/diffusion.hpp"
#include "deeppcr/linalg.hpp"
#include "deeppcr/newton.hpp"
#include "deeppcr/nn.hpp"
#include "deeppcr/resnet.hpp"
#include "deeppcr/rng.hpp"

#include <cmath>
#include <sstream>

namespace deeppcr {
namespace {

constexpr int kOracleLengths[] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 16, 64, 256, 1024};
constexpr int kOracleDims[] = {1, 2, 4, 8, 16};

double stack_rel_inf_error(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  double err = 0.0;
  double scale = 1.0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    err = std::max(err, (a[l] - b[l]).cwiseAbs().maxCoeff());
    scale = std::max(scale, b[l].cwiseAbs().maxCoeff());
  }
  return err / scale;
}

CheckResult make_result(const std::string& name, bool pass, const std::string& detail) {
  return CheckResult{name, pass, detail};
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Central finite differences of a sequence step against its Jacobian.
double jacobian_fd_error(const MarkovSequence& seq, int l, const Vector& z, double h = 1e-6) {
  const Matrix jac = seq.step_jacobian(l, z);
  double err = 0.0;
  double scale = std::max(1.0, jac.cwiseAbs().maxCoeff());
  Vector zp = z, zm = z;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    zp[j] = z[j] + h;
    zm[j] = z[j] - h;
    const Vector col = (seq.step(l, zp) - seq.step(l, zm)) / (2.0 * h);
    err = std::max(err, (col - jac.col(j)).cwiseAbs().maxCoeff());
    zp[j] = z[j];
    zm[j] = z[j];
  }
  return err / scale;
}


CheckResult check_linalg_kernels(std::uint64_t seed) {
  Rng rng(seed);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(6));
    const int k = 1 + static_cast<int>(rng.below(6));
    const int n = 1 + static_cast<int>(rng.below(6));
    Matrix a = rng.uniform_matrix(m, k, -1, 1);
    Matrix b = rng.uniform_matrix(k, n, -1, 1);
    Matrix c = matmul(a, b);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int t = 0; t < k; ++t) acc += a(i, t) * b(t, j);
        if (std::abs(acc - c(i, j)) > 1e-13) {
          return make_result("linalg_kernels", false, "matmul differs from the triple loop");
        }
      }
    }
    Vector x = rng.uniform_vector(k, -1, 1);
    Vector y = matvec(a, x);
    for (int i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += a(i, t) * x[t];
      if (std::abs(acc - y[i]) > 1e-13) {
        return make_result("linalg_kernels", false, "matvec differs from the loop oracle");
      }
    }
  }
  return make_result("linalg_kernels", true, "matmul/matvec match loop oracles");
}

CheckResult check_barrier_law(WorkerPool* pool, std::uint64_t seed) {
  for (int L : {1, 2, 3, 5, 8, 17, 64, 300, 1024}) {
    auto system = random_system(L, 2, mix_seed(seed, L));
    auto [solution, trace] = pcr_solve(system, pool);
    (void)solution;
    if (trace.barrier_count != ceil_log2(L)) {
      return make_result("barrier_law", false,
                         "L=" + std::to_string(L) + " used " +
                             std::to_string(trace.barrier_count) + " barriers, expected " +
                             std::to_string(ceil_log2(L)));
    }
  }
  return make_result("barrier_law", true, "barrier count equals ceil(log2 L)");
}

CheckResult check_stepwise_consistency(std::uint64_t seed) {
  for (int L : {1, 3, 8, 33}) {
    auto system = random_system(L, 3, mix_seed(seed, L, 77));
    auto [fast, trace] = pcr_solve(system, nullptr);
    (void)trace;
    auto stepwise = pcr_solve_stepwise(system);
    for (int l = 0; l <= L; ++l) {
      if (!bits_equal(fast[l], stepwise[l])) {
        return make_result("stepwise_consistency", false,
                           "flat and step-driven solves disagree at L=" + std::to_string(L));
      }
    }
  }
  return make_result("stepwise_consistency", true, "flat solve matches the step-driven path");
}

CheckResult check_jacobians_fd(std::uint64_t seed) {
  Rng rng(seed);
  const double tol = 1e-5;

  // MLP forward, all activations (smooth probes only for ReLU).
  for (Activation act : {Activation::kRelu, Activation::kTanh, Activation::kSigmoid}) {
    const int w = 5, L = 4;
    std::vector<int> widths(L + 2, w);
    std::vector<Activation> acts(L + 1, act);
    acts[0] = Activation::kIdentity;
    MlpParams params = init_params(widths, acts, mix_seed(seed, static_cast<int>(act)));
    MlpForwardSequence seq(params, rng.gaussian_vector(w));
    for (int probe = 0; probe < 20; ++probe) {
      Vector z = rng.gaussian_vector(w);
      if (act == Activation::kRelu && (z.cwiseAbs().array() < 1e-4).any()) continue;
      const int l = 1 + static_cast<int>(rng.below(L));
      const double err = jacobian_fd_error(seq, l, z);
      if (err > tol) {
        return make_result("jacobian_fd", false,
                           std::string("mlp forward ") + to_string(act) + " error " + fmt(err));
      }
    }
  }

  // Backward sequence (linear in its state).
  {
    const int w = 4, L = 6;
    std::vector<int> widths(L + 2, w);
    std::vector<Activation> acts(L + 1, Activation::kTanh);
    acts[0] = Activation::kIdentity;
    MlpParams params = init_params(widths, acts, mix_seed(seed, 101));
    MlpForwardSequence fwd(params, rng.gaussian_vector(w));
    auto states = sequential_rollout(fwd);
    MlpBackwardSequence seq(params, states, rng.gaussian_vector(w));
    for (int probe = 0; probe < 20; ++probe) {
      Vector g = rng.gaussian_vector(w);
      const int k = 1 + static_cast<int>(rng.below(L));
      const double err = jacobian_fd_error(seq, k, g);
      if (err > tol) {
        return make_result("jacobian_fd", false, "mlp backward error " + fmt(err));
      }
    }
  }

  // Collapsed ResNet block.
  {
    const int w = 4, inner = 8, s = 4;
    std::vector<int> widths(inner + 2, w);
    std::vector<Activation> acts(inner + 1, Activation::kTanh);
    acts[0] = Activation::kIdentity;
    ResNetParams params{init_params(widths, acts, mix_seed(seed, 202)), s};
    ResNetCollapsedSequence seq(params, rng.gaussian_vector(w));
    for (int probe = 0; probe < 20; ++probe) {
      Vector z = rng.gaussian_vector(w);
      const int m = 1 + static_cast<int>(rng.below(inner / s));
      const double err = jacobian_fd_error(seq, m, z);
      if (err > tol) {
        return make_result("jacobian_fd", false, "resnet block error " + fmt(err));
      }
    }
  }

  // Denoising step.
  {
    const int dim = 6, L = 32;
    Denoiser denoiser = Denoiser::random(dim, 16, mix_seed(seed, 303));
    NoiseSchedule schedule = NoiseSchedule::linear_beta(L);
    NoiseTape tape = NoiseTape::sample(L, dim, mix_seed(seed, 304));
    DiffusionSequence seq(denoiser, schedule, tape, rng.gaussian_vector(dim));
    for (int probe = 0; probe < 20; ++probe) {
      Vector z = rng.gaussian_vector(dim);
      const int l = 1 + static_cast<int>(rng.below(L));
      const double err = jacobian_fd_error(seq, l, z);
      if (err > tol) {
        return make_result("jacobian_fd", false, "denoising step error " + fmt(err));
      }
    }
  }

  return make_result("jacobian_fd", true, "all step Jacobians match finite differences");
}

CheckResult check_backward_parity(WorkerPool* pool, std::uint64_t seed) {
  Rng rng(seed);
  for (int trial = 0; trial < 4; ++trial) {
    const int w = 6, L = 24;
    std::vector<int> widths(L + 2, w);
    std::vector<Activation> acts(L + 1, trial % 2 == 0 ? Activation::kRelu : Activation::kTanh);
    acts[0] = Activation::kIdentity;
    MlpParams params = init_params(widths, acts, mix_seed(seed, trial));
    MlpForwardSequence fwd(params, rng.gaussian_vector(w));
    auto states = sequential_rollout(fwd);
    Vector output_grad = rng.gaussian_vector(w);
    MlpBackwardSequence seq(params, states, output_grad);

    std::vector<Vector> guess(L + 1, Vector::Zero(w));
    auto [solution, report] = newton_solve(seq, guess, NewtonConfig::forward_pass_defaults(), pool);
    if (report.iterations != 1) {
      return make_result("backward_parity", false, "linear solve took more than one iteration");
    }
    auto reference = sequential_backprop(params, states, output_grad);
    double err = 0.0, scale = 1.0;
    for (int k = 0; k <= L; ++k) {
      err = std::max(err, (solution[k] - reference[L - k]).cwiseAbs().maxCoeff());
      scale = std::max(scale, reference[L - k].cwiseAbs().maxCoeff());
    }
    if (err / scale > 1e-10) {
      return make_result("backward_parity", false, "gradient error " + fmt(err / scale));
    }
  }
  return make_result("backward_parity", true, "PCR gradients match sequential backprop");
}

CheckResult check_resnet_collapse(std::uint64_t seed) {
  Rng rng(seed);
  const int w = 5, inner = 12, s = 4;
  std::vector<int> widths(inner + 2, w);
  std::vector<Activation> acts(inner + 1, Activation::kRelu);
  acts[0] = Activation::kIdentity;
  ResNetParams params{init_params(widths, acts, seed), s};
  Vector input = rng.gaussian_vector(w);
  ResNetCollapsedSequence seq(params, input);
  auto macro = sequential_rollout(seq);
  auto layers = resnet_layer_rollout(params, input);
  double err = 0.0, scale = 1.0;
  for (int m = 0; m <= params.block_count(); ++m) {
    err = std::max(err, (macro[m] - layers[m * s]).cwiseAbs().maxCoeff());
    scale = std::max(scale, layers[m * s].cwiseAbs().maxCoeff());
  }
  if (err / scale > 1e-12) {
    return make_result("resnet_collapse", false, "collapsed rollout differs: " + fmt(err / scale));
  }
  return make_result("resnet_collapse", true, "collapsed blocks match the layerwise rollout");
}

CheckResult check_newton_linear_one_shot(WorkerPool* pool, std::uint64_t seed) {
  Rng rng(seed);
  const int w = 4, L = 10;
  std::vector<int> widths(L + 2, w);
  std::vector<Activation> acts(L + 1, Activation::kIdentity);
  MlpParams params = init_params(widths, acts, seed);
  MlpForwardSequence seq(params, rng.gaussian_vector(w));
  std::vector<Vector> z0(L + 1);
  for (int l = 0; l <= L; ++l) z0[l] = rng.gaussian_vector(w);
  auto [solution, report] = newton_solve(seq, z0, NewtonConfig::forward_pass_defaults(), pool);
  auto reference = sequential_rollout(seq);
  if (report.iterations != 1 || !report.converged) {
    return make_result("newton_linear_one_shot", false,
                       "took " + std::to_string(report.iterations) + " iterations");
  }
  const double err = stack_rel_inf_error(solution, reference);
  if (err > 1e-10) {
    return make_result("newton_linear_one_shot", false, "solution error " + fmt(err));
  }
  return make_result("newton_linear_one_shot", true, "affine sequences solve in one iteration");
}

CheckResult check_determinism(std::uint64_t seed) {
  // Bitwise equality of solver outputs across worker counts.
  for (int L : {7, 64, 129}) {
    auto system = random_system(L, 4, mix_seed(seed, L, 5));
    auto [base, trace0] = pcr_solve(system, nullptr);
    for (int workers : {2, 4, 8}) {
      WorkerPool pool(workers);
      auto [other, trace] = pcr_solve(system, &pool);
      for (int l = 0; l <= L; ++l) {
        if (!bits_equal(base[l], other[l])) {
          return make_result("determinism", false,
                             "pcr output differs with " + std::to_string(workers) + " workers");
        }
      }
      if (trace.barrier_count != trace0.barrier_count ||
          trace.row_update_counts != trace0.row_update_counts) {
        return make_result("determinism", false, "trace differs across worker counts");
      }
    }
  }
  // Newton over a nonlinear sequence.
  {
    Rng rng(seed);
    const int w = 6, L = 40;
    std::vector<int> widths(L + 2, w);
    std::vector<Activation> acts(L + 1, Activation::kTanh);
    acts[0] = Activation::kIdentity;
    MlpParams params = init_params(widths, acts, mix_seed(seed, 9));
    MlpForwardSequence seq(params, rng.gaussian_vector(w));
    auto guess = first_layer_copy_guess(seq);
    auto [base, rep0] = newton_solve(seq, guess, NewtonConfig::forward_pass_defaults(), nullptr);
    for (int workers : {2, 8}) {
      WorkerPool pool(workers);
      auto [other, rep] = newton_solve(seq, guess, NewtonConfig::forward_pass_defaults(), &pool);
      if (rep.iterations != rep0.iterations) {
        return make_result("determinism", false, "newton iteration count varies with workers");
      }
      for (int l = 0; l <= L; ++l) {
        if (!bits_equal(base[l], other[l])) {
          return make_result("determinism", false, "newton output varies with workers");
        }
      }
    }
  }
  return make_result("determinism", true, "solver outputs bitwise stable across worker counts");
}

CheckResult check_memory_accounting(std::uint64_t seed) {
  for (int L : {16, 128}) {
    for (int dim : {2, 8}) {
      auto system = random_system(L, dim, mix_seed(seed, L, dim));
      auto [solution, trace] = pcr_solve(system, nullptr);
      (void)solution;
      const std::int64_t analytic = pcr_workspace_estimate(system.state_dims);
      const double ratio = static_cast<double>(trace.workspace_bytes) / analytic;
      if (ratio < 0.5 || ratio > 2.0) {
        return make_result("memory_accounting", false,
                           "workspace/analytic ratio " + fmt(ratio) + " at L=" +
                               std::to_string(L) + " d=" + std::to_string(dim));
      }
    }
  }
  return make_result("memory_accounting", true,
                     "measured workspace within 2x of the analytic L*d^2 count");
}

CheckResult check_diffusion_determinism(std::uint64_t seed) {
  const int dim = 5, L = 64;
  NoiseTape a = NoiseTape::sample(L, dim, seed);
  NoiseTape b = NoiseTape::sample(L, dim, seed);
  for (int l = 0; l < L; ++l) {
    if (!bits_equal(a.draws[l], b.draws[l])) {
      return make_result("diffusion_determinism", false, "tape regeneration not bitwise");
    }
  }
  Denoiser denoiser = Denoiser::random(dim, 12, mix_seed(seed, 4));
  NoiseSchedule schedule = NoiseSchedule::linear_beta(L);
  Rng rng(mix_seed(seed, 5));
  Vector z_init = rng.gaussian_vector(dim);
  DiffusionSequence seq1(denoiser, schedule, a, z_init);
  DiffusionSequence seq2(denoiser, schedule, b, z_init);
  auto r1 = sequential_rollout(seq1);
  auto r2 = sequential_rollout(seq2);
  for (int l = 0; l <= L; ++l) {
    if (!bits_equal(r1[l], r2[l])) {
      return make_result("diffusion_determinism", false, "rollout not bitwise reproducible");
    }
  }
  return make_result("diffusion_determinism", true, "same seed and tape reproduce bitwise");
}

}  // namespace

BlockBidiagSystem random_system(int length, int dim, std::uint64_t seed) {
  Rng rng(seed);
  BlockBidiagSystem system;
  system.state_dims.assign(length + 1, dim);
  system.sub_ops.resize(length + 1);
  system.rhs.resize(length + 1);
  system.rhs[0] = rng.uniform_vector(dim, -1, 1);
  for (int l = 1; l <= length; ++l) {
    system.sub_ops[l] = rng.uniform_matrix(dim, dim, -1, 1) / static_cast<double>(dim);
    system.rhs[l] = rng.uniform_vector(dim, -1, 1);
  }
  return system;
}

CheckResult check_oracle_equivalence(const SolveFn& solve, std::uint64_t seed, int count,
                                     double tol) {
  constexpr int num_lengths = sizeof(kOracleLengths) / sizeof(kOracleLengths[0]);
  constexpr int num_dims = sizeof(kOracleDims) / sizeof(kOracleDims[0]);
  double worst = 0.0;
  for (int i = 0; i < count; ++i) {
    const int L = kOracleLengths[i % num_lengths];
    const int dim = kOracleDims[(i / num_lengths) % num_dims];
    auto system = random_system(L, dim, mix_seed(seed, i));
    auto pcr = solve(system);
    auto oracle = forward_substitution_solve(system);
    const double err = stack_rel_inf_error(pcr, oracle);
    worst = std::max(worst, err);
    if (err > tol) {
      return make_result("oracle_equivalence", false,
                         "system " + std::to_string(i) + " (L=" + std::to_string(L) +
                             ", d=" + std::to_string(dim) + ") error " + fmt(err));
    }
  }
  return make_result("oracle_equivalence", true,
                     std::to_string(count) + " systems, worst relative error " + fmt(worst));
}

std::vector<CheckResult> run_verification(const VerifyOptions& options, WorkerPool* pool) {
  std::vector<CheckResult> results;
  auto solve = [pool](const BlockBidiagSystem& system) { return pcr_solve(system, pool).first; };
  results.push_back(check_linalg_kernels(mix_seed(options.seed, 1)));
  results.push_back(check_oracle_equivalence(solve, mix_seed(options.seed, 2),
                                             options.oracle_systems));
  results.push_back(check_barrier_law(pool, mix_seed(options.seed, 3)));
  results.push_back(check_stepwise_consistency(mix_seed(options.seed, 4)));
  results.push_back(check_jacobians_fd(mix_seed(options.seed, 5)));
  results.push_back(check_backward_parity(pool, mix_seed(options.seed, 6)));
  results.push_back(check_resnet_collapse(mix_seed(options.seed, 7)));
  results.push_back(check_newton_linear_one_shot(pool, mix_seed(options.seed, 8)));
  results.push_back(check_determinism(mix_seed(options.seed, 9)));
  results.push_back(check_memory_accounting(mix_seed(options.seed, 10)));
  results.push_back(check_diffusion_determinism(mix_seed(options.seed, 11)));
  return results;
}

std::string verify_transcript(const std::vector<CheckResult>& results) {
  std::ostringstream os;
  int failures = 0;
  for (const auto& r : results) {
    os << (r.pass ? "ok   " : "FAIL ") << r.name << ": " << r.detail << "\n";
    if (!r.pass) ++failures;
  }
  os << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed")
     << " (" << results.size() << " total)\n";
  return os.str();
}

}  // namespace deeppcr
