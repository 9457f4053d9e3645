#pragma once

#include "deeppcr/csv.hpp"
#include "deeppcr/mlp.hpp"
#include "deeppcr/newton.hpp"
#include "deeppcr/parallel.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace deeppcr {

struct BenchConfig {
  std::vector<int> depths;
  std::vector<int> widths;
  Activation activation = Activation::kRelu;
  int repeats = 5;
  int workers = 1;
  std::uint64_t seed = 0;
  NewtonConfig newton = NewtonConfig::forward_pass_defaults();

  void validate() const;
};

struct TimingStats {
  std::int64_t min_ns = 0;
  std::int64_t median_ns = 0;
  double mean_ns = 0.0;
  double std_ns = 0.0;
};

TimingStats timing_stats(std::vector<std::int64_t> samples);

// One CSV row per (L, w, method) cell.
struct BenchRow {
  std::string method;  // "sequential" or "deeppcr"
  int depth = 0;
  int width = 0;
  TimingStats time;
  std::int64_t assembly_ns = 0;   // deeppcr only: Jacobian/rhs assembly share
  std::int64_t seq_steps = 0;     // sequential rows: L
  std::int64_t barriers = 0;      // deeppcr rows: ceil(log2 L)
  int newton_iters = 0;
  double inf_error = 0.0;        // vs the sequential result
  std::int64_t workspace_bytes = 0;
  std::int64_t analytic_bytes = 0;
  std::string status = "ok";
};

std::vector<BenchRow> bench_forward(const BenchConfig& config, WorkerPool* pool);
std::vector<BenchRow> bench_backward(const BenchConfig& config, WorkerPool* pool);

CsvWriter bench_rows_to_csv(const std::vector<BenchRow>& rows, const BenchConfig& config);

struct DiffuseConfig {
  std::vector<int> depths;  // denoising steps L
  std::vector<int> widths;  // state dimensions
  int hidden = 64;          // denoiser hidden width
  int repeats = 3;
  int workers = 1;
  std::uint64_t seed = 0;
  NewtonConfig newton = NewtonConfig::diffusion_defaults();

  void validate() const;
};

struct DiffuseRow {
  int dim = 0;
  int depth = 0;
  TimingStats sequential;
  TimingStats deeppcr;
  std::int64_t assembly_ns = 0;
  double speedup = 0.0;
  double newton_iters_mean = 0.0;
  double linf_error = 0.0;
  std::int64_t barriers = 0;
  std::string status = "ok";
};

std::vector<DiffuseRow> bench_diffusion(const DiffuseConfig& config, WorkerPool* pool);

CsvWriter diffuse_rows_to_csv(const std::vector<DiffuseRow>& rows, const DiffuseConfig& config);

struct TrainLogRow;

/// Interleaves the per-batch logs of the two training arms and appends the
/// loss-difference and forward-time-ratio columns.
CsvWriter train_logs_to_csv(const std::vector<TrainLogRow>& sequential,
                            const std::vector<TrainLogRow>& deeppcr, std::uint64_t seed,
                            int workers);

}  // namespace deeppcr
