#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace frugal {

// Worker count: hardware concurrency capped by FRUGAL_THREADS.
inline int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("FRUGAL_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

// Fixed-size pool running static range partitions. Work item w always covers
// the same index range for a given (n, workers), so per-worker accumulation
// buffers fill deterministically regardless of thread scheduling.
class ThreadPool {
 public:
  explicit ThreadPool(int workers) : workers_(std::max(1, workers)) {
    for (int i = 1; i < workers_; ++i)
      threads_.emplace_back([this, i] { worker_loop(i); });
  }

  ~ThreadPool() {
    {
      std::unique_lock lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  int workers() const { return workers_; }

  // fn(begin, end, worker_id); worker w receives the w-th contiguous slice of [0, n).
  void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t, int)>& fn) {
    if (n == 0) return;
    if (workers_ == 1) {
      fn(0, n, 0);
      return;
    }
    {
      std::unique_lock lk(mu_);
      job_ = &fn;
      job_n_ = n;
      pending_ = workers_ - 1;
      ++generation_;
    }
    cv_.notify_all();
    run_slice(0, fn, n);
    std::unique_lock lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    job_ = nullptr;
  }

 private:
  void run_slice(int w, const std::function<void(std::size_t, std::size_t, int)>& fn, std::size_t n) {
    const std::size_t chunk = (n + workers_ - 1) / workers_;
    const std::size_t b = std::min<std::size_t>(n, w * chunk);
    const std::size_t e = std::min<std::size_t>(n, b + chunk);
    if (b < e) fn(b, e, w);
  }

  void worker_loop(int w) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t, std::size_t, int)>* job = nullptr;
      std::size_t n = 0;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        job = job_;
        n = job_n_;
      }
      if (job) run_slice(w, *job, n);
      {
        std::unique_lock lk(mu_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  int workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(std::size_t, std::size_t, int)>* job_ = nullptr;
  std::size_t job_n_ = 0;
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace frugal
