#pragma once

#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace deeppcr {

// Fixed-size pool used for the data-parallel regions (PCR row reductions,
// Jacobian assembly, per-sample solves). Work is split into contiguous index
// ranges; each parallel_ranges call returns only after every range finished,
// which is the barrier separating PCR reduction steps.
//
// Determinism contract: tasks write disjoint outputs and read only pre-call
// state, so results are identical for any worker count.
class WorkerPool {
 public:
  using RangeFn = std::function<void(std::int64_t begin, std::int64_t end)>;

  explicit WorkerPool(int workers);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int workers() const { return workers_; }

  /// Runs fn over [0, count) split into one contiguous range per worker.
  /// The calling thread executes the first range itself.
  void parallel_ranges(std::int64_t count, const RangeFn& fn);

  /// Splits [0, count) into `chunks` contiguous ranges (independent of the
  /// worker count) and runs fn(chunk_index, begin, end) for each. Used where
  /// partial results are folded afterwards in chunk order.
  void parallel_chunks(std::int64_t count, int chunks,
                       const std::function<void(int, std::int64_t, std::int64_t)>& fn);

 private:
  struct Task {
    std::int64_t begin = 0;
    std::int64_t end = 0;
  };

  void worker_loop(int index);
  void run_tasks(const std::function<void(int, std::int64_t, std::int64_t)>& fn,
                 std::vector<Task> tasks);

  int workers_;
  std::vector<std::thread> threads_;

  std::mutex mu_;
  std::condition_variable cv_work_;
  std::condition_variable cv_done_;
  const std::function<void(int, std::int64_t, std::int64_t)>* job_ = nullptr;
  std::vector<Task> tasks_;
  std::size_t next_task_ = 0;
  std::size_t pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr first_error_;
};

/// Splits [0, count) into at most `parts` non-empty contiguous ranges.
std::vector<std::pair<std::int64_t, std::int64_t>> split_ranges(std::int64_t count, int parts);

}  // namespace deeppcr
