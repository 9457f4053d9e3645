// Benchmark harness and experiment runner: times sequential rollouts against
// the parallel solver, reproduces the training and denoising parity studies
// at desk scale, and runs the invariant suite. Results go to CSV; see
// README.md for usage.

#include "deeppcr/bench.hpp"
#include "deeppcr/data.hpp"
#include "deeppcr/nn.hpp"
#include "deeppcr/verify.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace deeppcr;

struct GlobalOptions {
  std::vector<int> depths{64, 256, 1024};
  std::vector<int> widths{4, 16};
  std::string activation = "relu";
  int repeats = 5;
  int workers = 1;
  std::uint64_t seed = 0;
  int newton_max_iters = -1;  // -1 keeps the per-experiment default
  double newton_abs_tol = 1e-4;
  double newton_rel_tol = 1e-4;
  int newton_fixed_iters = 0;  // 0 disables fixed-iteration mode
  int skip_length = 4;
  int epochs = 2;
  int batch_size = 128;
  double lr = 1e-3;
  std::string data_dir;
  std::string out = "out.csv";
};

void add_common_flags(CLI::App* cmd, GlobalOptions& opt) {
  cmd->add_option("--depths", opt.depths, "Sequence depths L to sweep");
  cmd->add_option("--widths", opt.widths, "State widths w to sweep");
  cmd->add_option("--activation", opt.activation, "Activation: relu, tanh or sigmoid");
  cmd->add_option("--repeats", opt.repeats, "Timing repetitions per cell");
  cmd->add_option("--workers", opt.workers, "Worker count for the parallel regions");
  cmd->add_option("--seed", opt.seed, "Base RNG seed");
  cmd->add_option("--newton-max-iters", opt.newton_max_iters, "Newton iteration cap");
  cmd->add_option("--newton-abs-tol", opt.newton_abs_tol, "Absolute residual threshold");
  cmd->add_option("--newton-rel-tol", opt.newton_rel_tol, "Relative residual threshold");
  cmd->add_option("--newton-fixed-iters", opt.newton_fixed_iters,
                  "Run exactly this many Newton iterations (0 = use tolerances)");
  cmd->add_option("--skip-length", opt.skip_length, "ResNet skip connection length");
  cmd->add_option("--epochs", opt.epochs, "Training epochs");
  cmd->add_option("--batch-size", opt.batch_size, "Training batch size");
  cmd->add_option("--lr", opt.lr, "SGD learning rate");
  cmd->add_option("--data-dir", opt.data_dir,
                  "Dataset directory (overrides DEEPPCR_DATA_DIR)");
  cmd->add_option("--out", opt.out, "Output CSV path");
}

NewtonConfig newton_from(const GlobalOptions& opt, NewtonConfig base) {
  if (opt.newton_max_iters > 0) base.max_iters = opt.newton_max_iters;
  base.abs_tol = opt.newton_abs_tol;
  base.rel_tol = opt.newton_rel_tol;
  if (opt.newton_fixed_iters > 0) base.fixed_iters = opt.newton_fixed_iters;
  return base;
}

BenchConfig bench_config_from(const GlobalOptions& opt) {
  BenchConfig config;
  config.depths = opt.depths;
  config.widths = opt.widths;
  config.activation = activation_from_string(opt.activation);
  config.repeats = opt.repeats;
  config.workers = opt.workers;
  config.seed = opt.seed;
  config.newton = newton_from(opt, NewtonConfig::forward_pass_defaults());
  return config;
}

Dataset load_training_data(const GlobalOptions& opt, int samples) {
  const std::string dir = resolve_data_dir(opt.data_dir);
  if (!dir.empty()) {
    try {
      Dataset full = load_mnist_train(dir);
      if (full.size() > samples) {
        full.samples.resize(samples);
        full.labels.resize(samples);
      }
      std::cout << "using MNIST from " << dir << " (" << full.size() << " samples)\n";
      return full;
    } catch (const IdxError& e) {
      std::cout << "MNIST unavailable (" << e.what() << "); falling back to synthetic data\n";
    }
  }
  return synthetic_classification(samples, 784, 10, opt.seed);
}

int run_bench(const GlobalOptions& opt, bool backward) {
  BenchConfig config = bench_config_from(opt);
  WorkerPool pool(opt.workers);
  auto rows = backward ? bench_backward(config, &pool) : bench_forward(config, &pool);
  CsvWriter csv = bench_rows_to_csv(rows, config);
  csv.write(opt.out);
  std::cout << csv.str();
  std::cout << "wrote " << opt.out << "\n";
  return 0;
}

int run_train(const GlobalOptions& opt) {
  const int L = opt.depths.front();
  const int w = opt.widths.front();
  Dataset data = load_training_data(opt, 1000);

  SgdConfig sgd;
  sgd.learning_rate = opt.lr;
  sgd.epochs = opt.epochs;
  sgd.batch_size = opt.batch_size;
  sgd.seed = opt.seed;

  NewtonConfig newton = newton_from(opt, NewtonConfig::forward_pass_defaults());
  WorkerPool pool(opt.workers);

  ResNetClassifier model =
      init_resnet_classifier(data.feature_dim, w, L, opt.skip_length, data.class_count,
                             activation_from_string(opt.activation), opt.seed);

  auto [seq_model, seq_log] = train_resnet(model, data, sgd, TrainMode::kSequential,
                                           newton, &pool);
  auto [pcr_model, pcr_log] = train_resnet(model, data, sgd, TrainMode::kDeepPcr, newton, &pool);

  CsvWriter csv = train_logs_to_csv(seq_log, pcr_log, opt.seed, opt.workers);
  csv.write(opt.out);

  if (!pcr_log.empty() && pcr_log.back().newton_iters < 0) {
    std::cout << "deeppcr arm aborted: newton diverged in batch " << pcr_log.back().step
              << " (iteration " << -pcr_log.back().newton_iters << ")\n";
  }
  const double seq_acc = evaluate_accuracy(seq_model, data, &pool);
  const double pcr_acc = evaluate_accuracy(pcr_model, data, &pool);
  double worst_diff = 0.0;
  for (std::size_t i = 0; i < std::min(seq_log.size(), pcr_log.size()); ++i) {
    worst_diff = std::max(worst_diff, std::abs(seq_log[i].loss - pcr_log[i].loss));
  }
  std::cout << "final accuracy: sequential " << seq_acc << ", deeppcr " << pcr_acc << "\n";
  std::cout << "largest per-batch loss difference: " << worst_diff << "\n";
  std::cout << "wrote " << opt.out << "\n";
  return 0;
}

int run_diffuse(const GlobalOptions& opt) {
  DiffuseConfig config;
  config.depths = opt.depths;
  config.widths = opt.widths;
  config.repeats = opt.repeats;
  config.workers = opt.workers;
  config.seed = opt.seed;
  config.newton = newton_from(opt, NewtonConfig::diffusion_defaults());
  WorkerPool pool(opt.workers);
  auto rows = bench_diffusion(config, &pool);
  CsvWriter csv = diffuse_rows_to_csv(rows, config);
  csv.write(opt.out);
  std::cout << csv.str();
  std::cout << "wrote " << opt.out << "\n";
  return 0;
}

int run_verify(const GlobalOptions& opt) {
  VerifyOptions options;
  options.seed = opt.seed;
  WorkerPool pool(opt.workers);
  auto results = run_verification(options, &pool);
  std::cout << verify_transcript(results);
  for (const auto& r : results) {
    if (!r.pass) return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallelized sequential computation benchmarks (PCR + Newton)"};
  app.require_subcommand(1);

  GlobalOptions opt;
  CLI::App* fwd = app.add_subcommand("bench-forward", "Time forward passes: sequential vs PCR");
  CLI::App* bwd = app.add_subcommand("bench-backward", "Time backward passes: sequential vs PCR");
  CLI::App* train = app.add_subcommand("train-resnet", "Train a ResNet both ways and compare");
  CLI::App* diffuse = app.add_subcommand("diffuse", "Denoising chain: sequential vs PCR");
  CLI::App* verify = app.add_subcommand("verify", "Run the invariant suite");
  for (CLI::App* cmd : {fwd, bwd, train, diffuse, verify}) add_common_flags(cmd, opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(fwd)) return run_bench(opt, false);
    if (app.got_subcommand(bwd)) return run_bench(opt, true);
    if (app.got_subcommand(train)) return run_train(opt);
    if (app.got_subcommand(diffuse)) return run_diffuse(opt);
    if (app.got_subcommand(verify)) return run_verify(opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
