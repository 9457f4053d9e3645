#include "deeppcr/bench.hpp"

#include "deeppcr/diffusion.hpp"
#include "deeppcr/linalg.hpp"
#include "deeppcr/nn.hpp"
#include "deeppcr/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace deeppcr {
namespace {

using Clock = std::chrono::steady_clock;

std::int64_t ns_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
}

double stack_inf_diff(const Vector& a, const Vector& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

void BenchConfig::validate() const {
  if (repeats < 1) throw ShapeError("bench: repeats must be >= 1");
  if (depths.empty() || widths.empty()) throw ShapeError("bench: depths and widths required");
  newton.validate();
}

void DiffuseConfig::validate() const {
  if (repeats < 1) throw ShapeError("diffuse: repeats must be >= 1");
  if (depths.empty() || widths.empty()) throw ShapeError("diffuse: depths and widths required");
  newton.validate();
}

TimingStats timing_stats(std::vector<std::int64_t> samples) {
  TimingStats st;
  if (samples.empty()) return st;
  std::sort(samples.begin(), samples.end());
  st.min_ns = samples.front();
  st.median_ns = samples[samples.size() / 2];
  double mean = 0.0;
  for (auto s : samples) mean += static_cast<double>(s);
  mean /= static_cast<double>(samples.size());
  st.mean_ns = mean;
  double var = 0.0;
  for (auto s : samples) var += (s - mean) * (s - mean);
  st.std_ns = std::sqrt(var / samples.size());
  return st;
}

std::vector<BenchRow> bench_forward(const BenchConfig& config, WorkerPool* pool) {
  config.validate();
  std::vector<BenchRow> rows;
  for (int L : config.depths) {
    for (int w : config.widths) {
      const std::uint64_t cell_seed = mix_seed(config.seed, L, w);
      std::vector<int> widths(L + 2, w);
      std::vector<Activation> acts(L + 1, config.activation);
      acts[0] = Activation::kIdentity;
      MlpParams params = init_params_fanin_uniform(widths, acts, cell_seed);
      Rng rng(mix_seed(cell_seed, 7));
      Vector input = rng.gaussian_vector(w);
      MlpForwardSequence seq(params, input);

      // Sequential baseline.
      BenchRow seq_row;
      seq_row.method = "sequential";
      seq_row.depth = L;
      seq_row.width = w;
      seq_row.seq_steps = L;
      std::vector<Vector> reference;
      {
        std::vector<std::int64_t> times(config.repeats);
        for (int r = 0; r < config.repeats; ++r) {
          auto t0 = Clock::now();
          reference = sequential_rollout(seq);
          times[r] = ns_since(t0);
        }
        seq_row.time = timing_stats(std::move(times));
      }
      rows.push_back(seq_row);

      // DeepPCR.
      BenchRow pcr_row;
      pcr_row.method = "deeppcr";
      pcr_row.depth = L;
      pcr_row.width = w;
      pcr_row.seq_steps = L;
      pcr_row.analytic_bytes = pcr_workspace_estimate(seq.state_dims());
      try {
        std::vector<std::int64_t> times(config.repeats);
        std::vector<Vector> solution;
        NewtonReport report;
        NewtonTimings best_timings;
        PcrTrace trace;
        std::int64_t best = -1;
        for (int r = 0; r < config.repeats; ++r) {
          NewtonTimings timings;
          PcrTrace t;
          auto guess = first_layer_copy_guess(seq);
          auto t0 = Clock::now();
          auto [z, rep] = newton_solve_timed(seq, guess, config.newton, pool, &timings, &t);
          times[r] = ns_since(t0);
          if (best < 0 || times[r] < best) {
            best = times[r];
            best_timings = timings;
            trace = t;
          }
          solution = std::move(z);
          report = rep;
        }
        pcr_row.time = timing_stats(std::move(times));
        pcr_row.assembly_ns = best_timings.assembly_ns;
        pcr_row.barriers = trace.barrier_count;
        pcr_row.newton_iters = report.iterations;
        pcr_row.inf_error = stack_inf_diff(solution.back(), reference.back());
        pcr_row.workspace_bytes = trace.workspace_bytes;
        if (pcr_row.barriers != ceil_log2(L)) {
          pcr_row.status = "barrier-count-mismatch";
        }
      } catch (const DivergenceError& e) {
        pcr_row.status = std::string("diverged: ") + e.what();
      }
      rows.push_back(pcr_row);
    }
  }
  return rows;
}

std::vector<BenchRow> bench_backward(const BenchConfig& config, WorkerPool* pool) {
  config.validate();
  std::vector<BenchRow> rows;
  for (int L : config.depths) {
    for (int w : config.widths) {
      const std::uint64_t cell_seed = mix_seed(config.seed, L, w + 1000003);
      std::vector<int> widths(L + 2, w);
      std::vector<Activation> acts(L + 1, config.activation);
      acts[0] = Activation::kIdentity;
      MlpParams params = init_params_fanin_uniform(widths, acts, cell_seed);
      Rng rng(mix_seed(cell_seed, 7));
      Vector input = rng.gaussian_vector(w);
      MlpForwardSequence fwd_seq(params, input);
      const std::vector<Vector> states = sequential_rollout(fwd_seq);
      Vector output_grad = rng.gaussian_vector(w);
      MlpBackwardSequence seq(params, states, output_grad);

      BenchRow seq_row;
      seq_row.method = "sequential";
      seq_row.depth = L;
      seq_row.width = w;
      seq_row.seq_steps = L;
      std::vector<Vector> reference;
      {
        std::vector<std::int64_t> times(config.repeats);
        for (int r = 0; r < config.repeats; ++r) {
          auto t0 = Clock::now();
          reference = sequential_backprop(params, states, output_grad);
          times[r] = ns_since(t0);
        }
        seq_row.time = timing_stats(std::move(times));
      }
      rows.push_back(seq_row);

      BenchRow pcr_row;
      pcr_row.method = "deeppcr";
      pcr_row.depth = L;
      pcr_row.width = w;
      pcr_row.seq_steps = L;
      pcr_row.analytic_bytes = pcr_workspace_estimate(seq.state_dims());
      std::vector<std::int64_t> times(config.repeats);
      std::vector<Vector> solution;
      NewtonReport report;
      NewtonTimings best_timings;
      PcrTrace trace;
      std::int64_t best = -1;
      for (int r = 0; r < config.repeats; ++r) {
        NewtonTimings timings;
        PcrTrace t;
        std::vector<Vector> guess(L + 1);
        for (int k = 0; k <= L; ++k) guess[k] = Vector::Zero(seq.state_dim(k));
        auto t0 = Clock::now();
        auto [z, rep] = newton_solve_timed(seq, guess, config.newton, pool, &timings, &t);
        times[r] = ns_since(t0);
        if (best < 0 || times[r] < best) {
          best = times[r];
          best_timings = timings;
          trace = t;
        }
        solution = std::move(z);
        report = rep;
      }
      pcr_row.time = timing_stats(std::move(times));
      pcr_row.assembly_ns = best_timings.assembly_ns;
      pcr_row.barriers = trace.barrier_count;
      pcr_row.newton_iters = report.iterations;
      pcr_row.workspace_bytes = trace.workspace_bytes;
      // Gradient error against classical backprop: solution block k holds the
      // gradient w.r.t. z_{L-k}.
      double err = 0.0;
      double scale = 0.0;
      for (int k = 0; k <= L; ++k) {
        err = std::max(err, stack_inf_diff(solution[k], reference[L - k]));
        scale = std::max(scale, norm_inf(reference[L - k]));
      }
      pcr_row.inf_error = scale > 0 ? err / scale : err;
      rows.push_back(pcr_row);
    }
  }
  return rows;
}

CsvWriter bench_rows_to_csv(const std::vector<BenchRow>& rows, const BenchConfig& config) {
  CsvWriter csv({"method", "L", "w", "activation", "repeats", "min_ns", "median_ns", "mean_ns",
                 "std_ns", "assembly_ns", "seq_steps", "barriers", "newton_iters", "inf_error",
                 "workspace_bytes", "analytic_bytes", "status"});
  csv.set_metadata(config.seed, config.workers, kVersion);
  for (const auto& r : rows) {
    csv.begin_row();
    csv.add(r.method);
    csv.add(r.depth);
    csv.add(r.width);
    csv.add(to_string(config.activation));
    csv.add(config.repeats);
    csv.add(r.time.min_ns);
    csv.add(r.time.median_ns);
    csv.add(r.time.mean_ns);
    csv.add(r.time.std_ns);
    csv.add(r.assembly_ns);
    csv.add(r.seq_steps);
    csv.add(r.barriers);
    csv.add(r.newton_iters);
    csv.add(r.inf_error);
    csv.add(r.workspace_bytes);
    csv.add(r.analytic_bytes);
    csv.add(r.status);
    csv.end_row();
  }
  return csv;
}

std::vector<DiffuseRow> bench_diffusion(const DiffuseConfig& config, WorkerPool* pool) {
  config.validate();
  std::vector<DiffuseRow> rows;
  for (int dim : config.widths) {
    for (int L : config.depths) {
      const std::uint64_t cell_seed = mix_seed(config.seed, dim, L);
      Denoiser denoiser = Denoiser::random(dim, config.hidden, mix_seed(cell_seed, 1));
      NoiseSchedule schedule = NoiseSchedule::linear_beta(L);
      NoiseTape tape = NoiseTape::sample(L, dim, mix_seed(cell_seed, 2));
      Rng rng(mix_seed(cell_seed, 3));
      Vector z_init = rng.gaussian_vector(dim);
      DiffusionSequence seq(denoiser, schedule, tape, z_init);

      DiffuseRow row;
      row.dim = dim;
      row.depth = L;

      std::vector<Vector> reference;
      {
        std::vector<std::int64_t> times(config.repeats);
        for (int r = 0; r < config.repeats; ++r) {
          auto t0 = Clock::now();
          reference = sequential_rollout(seq);
          times[r] = ns_since(t0);
        }
        row.sequential = timing_stats(std::move(times));
      }

      try {
        std::vector<std::int64_t> times(config.repeats);
        std::vector<Vector> solution;
        NewtonReport report;
        NewtonTimings best_timings;
        PcrTrace trace;
        std::int64_t best = -1;
        const Vector anchor = Vector::Zero(dim);
        for (int r = 0; r < config.repeats; ++r) {
          NewtonTimings timings;
          PcrTrace t;
          auto guess = anchor_guess(seq, anchor);
          auto t0 = Clock::now();
          auto [z, rep] = newton_solve_timed(seq, guess, config.newton, pool, &timings, &t);
          times[r] = ns_since(t0);
          if (best < 0 || times[r] < best) {
            best = times[r];
            best_timings = timings;
            trace = t;
          }
          solution = std::move(z);
          report = rep;
        }
        row.deeppcr = timing_stats(std::move(times));
        row.assembly_ns = best_timings.assembly_ns;
        row.barriers = trace.barrier_count;
        row.newton_iters_mean = static_cast<double>(report.iterations);
        row.speedup = row.deeppcr.min_ns > 0
                          ? static_cast<double>(row.sequential.min_ns) / row.deeppcr.min_ns
                          : 0.0;
        row.linf_error = stack_inf_diff(solution.back(), reference.back());
      } catch (const DivergenceError& e) {
        row.status = std::string("diverged: ") + e.what();
      }
      rows.push_back(row);
    }
  }
  return rows;
}

CsvWriter train_logs_to_csv(const std::vector<TrainLogRow>& sequential,
                            const std::vector<TrainLogRow>& deeppcr, std::uint64_t seed,
                            int workers) {
  CsvWriter csv({"step", "epoch", "mode", "loss", "accuracy", "fwd_time_ns", "bwd_time_ns",
                 "newton_iters", "loss_diff", "fwd_time_ratio"});
  csv.set_metadata(seed, workers, kVersion);
  auto emit = [&csv](const TrainLogRow& row, double loss_diff, double ratio) {
    csv.begin_row();
    csv.add(row.step);
    csv.add(row.epoch);
    csv.add(to_string(row.mode));
    csv.add(row.loss);
    csv.add(row.accuracy);
    csv.add(row.fwd_time_ns);
    csv.add(row.bwd_time_ns);
    csv.add(row.newton_iters);
    csv.add(loss_diff);
    csv.add(ratio);
    csv.end_row();
  };
  // An aborted arm leaves fewer rows; pair what exists and pass the rest
  // through with empty difference columns.
  const std::size_t paired = std::min(sequential.size(), deeppcr.size());
  for (std::size_t i = 0; i < paired; ++i) {
    const TrainLogRow& a = sequential[i];
    const TrainLogRow& b = deeppcr[i];
    const double loss_diff = a.loss - b.loss;
    const double ratio =
        b.fwd_time_ns > 0 ? static_cast<double>(a.fwd_time_ns) / b.fwd_time_ns : 0.0;
    emit(a, loss_diff, ratio);
    emit(b, loss_diff, ratio);
  }
  for (std::size_t i = paired; i < sequential.size(); ++i) emit(sequential[i], 0.0, 0.0);
  for (std::size_t i = paired; i < deeppcr.size(); ++i) emit(deeppcr[i], 0.0, 0.0);
  return csv;
}

CsvWriter diffuse_rows_to_csv(const std::vector<DiffuseRow>& rows, const DiffuseConfig& config) {
  CsvWriter csv({"dim", "L", "repeats", "seq_min_ns", "seq_median_ns", "seq_mean_ns",
                 "pcr_min_ns", "pcr_median_ns", "pcr_mean_ns", "assembly_ns", "speedup",
                 "newton_iters_mean", "linf_error", "barriers", "status"});
  csv.set_metadata(config.seed, config.workers, kVersion);
  for (const auto& r : rows) {
    csv.begin_row();
    csv.add(r.dim);
    csv.add(r.depth);
    csv.add(config.repeats);
    csv.add(r.sequential.min_ns);
    csv.add(r.sequential.median_ns);
    csv.add(r.sequential.mean_ns);
    csv.add(r.deeppcr.min_ns);
    csv.add(r.deeppcr.median_ns);
    csv.add(r.deeppcr.mean_ns);
    csv.add(r.assembly_ns);
    csv.add(r.speedup);
    csv.add(r.newton_iters_mean);
    csv.add(r.linf_error);
    csv.add(r.barriers);
    csv.add(r.status);
    csv.end_row();
  }
  return csv;
}

}  // namespace deeppcr
