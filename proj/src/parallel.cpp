#include "deeppcr/parallel.hpp"

#include <algorithm>

namespace deeppcr {

std::vector<std::pair<std::int64_t, std::int64_t>> split_ranges(std::int64_t count, int parts) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  if (count <= 0 || parts <= 0) return out;
  const std::int64_t p = std::min<std::int64_t>(parts, count);
  const std::int64_t base = count / p;
  const std::int64_t rem = count % p;
  std::int64_t begin = 0;
  for (std::int64_t i = 0; i < p; ++i) {
    std::int64_t len = base + (i < rem ? 1 : 0);
    out.emplace_back(begin, begin + len);
    begin += len;
  }
  return out;
}

WorkerPool::WorkerPool(int workers) : workers_(std::max(1, workers)) {
  for (int i = 1; i < workers_; ++i) {
    threads_.emplace_back([this, i] { worker_loop(i); });
  }
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stop_ = true;
  }
  cv_work_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::worker_loop(int) {
  std::uint64_t seen = 0;
  for (;;) {
    const std::function<void(int, std::int64_t, std::int64_t)>* job = nullptr;
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_work_.wait(lock, [&] { return stop_ || (job_ != nullptr && generation_ != seen); });
      if (stop_) return;
      seen = generation_;
      job = job_;
    }
    for (;;) {
      Task task;
      int index;
      {
        std::lock_guard<std::mutex> lock(mu_);
        if (job_ != job || next_task_ >= tasks_.size()) break;
        index = static_cast<int>(next_task_);
        task = tasks_[next_task_++];
      }
      try {
        (*job)(index, task.begin, task.end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu_);
        if (!first_error_) first_error_ = std::current_exception();
      }
      {
        std::lock_guard<std::mutex> lock(mu_);
        if (--pending_ == 0) cv_done_.notify_all();
      }
    }
  }
}

void WorkerPool::run_tasks(const std::function<void(int, std::int64_t, std::int64_t)>& fn,
                           std::vector<Task> tasks) {
  if (tasks.empty()) return;
  if (workers_ == 1 || tasks.size() == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) fn(static_cast<int>(i), tasks[i].begin, tasks[i].end);
    return;
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    job_ = &fn;
    tasks_ = std::move(tasks);
    next_task_ = 0;
    pending_ = tasks_.size();
    first_error_ = nullptr;
    ++generation_;
  }
  cv_work_.notify_all();
  // The calling thread chews through tasks alongside the workers.
  for (;;) {
    Task task;
    int index;
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (next_task_ >= tasks_.size()) break;
      index = static_cast<int>(next_task_);
      task = tasks_[next_task_++];
    }
    try {
      fn(index, task.begin, task.end);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu_);
      if (!first_error_) first_error_ = std::current_exception();
    }
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (--pending_ == 0) cv_done_.notify_all();
    }
  }
  std::exception_ptr err;
  {
    std::unique_lock<std::mutex> lock(mu_);
    cv_done_.wait(lock, [&] { return pending_ == 0; });
    job_ = nullptr;
    err = first_error_;
    first_error_ = nullptr;
  }
  if (err) std::rethrow_exception(err);
}

void WorkerPool::parallel_ranges(std::int64_t count, const RangeFn& fn) {
  if (count <= 0) return;
  auto ranges = split_ranges(count, workers_);
  if (ranges.size() == 1) {
    fn(ranges[0].first, ranges[0].second);
    return;
  }
  std::vector<Task> tasks(ranges.size());
  for (std::size_t i = 0; i < ranges.size(); ++i) tasks[i] = {ranges[i].first, ranges[i].second};
  auto wrap = [&fn](int, std::int64_t b, std::int64_t e) { fn(b, e); };
  run_tasks(wrap, std::move(tasks));
}

void WorkerPool::parallel_chunks(std::int64_t count, int chunks,
                                 const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
  if (count <= 0) return;
  auto ranges = split_ranges(count, chunks);
  std::vector<Task> tasks(ranges.size());
  for (std::size_t i = 0; i < ranges.size(); ++i) tasks[i] = {ranges[i].first, ranges[i].second};
  run_tasks(fn, std::move(tasks));
}

}  // namespace deeppcr
