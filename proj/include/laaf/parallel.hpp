#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace laaf {

// Persistent worker pool for index-parallel loops. Work items write to
// disjoint, index-addressed slots, so results do not depend on how many
// workers exist (bitwise-identical output under any LAAF_THREADS setting).
class ThreadPool {
 public:
  static ThreadPool& global() {
    static ThreadPool pool(default_threads());
    return pool;
  }

  static unsigned default_threads() {
    if (const char* env = std::getenv("LAAF_THREADS")) {
      const long n = std::strtol(env, nullptr, 10);
      if (n >= 1) return static_cast<unsigned>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
  }

  explicit ThreadPool(unsigned threads) : workers_(threads > 0 ? threads - 1 : 0) {
    for (auto& w : workers_)
      w = std::thread([this] { worker_loop(); });
  }

  ~ThreadPool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_)
      if (w.joinable()) w.join();
  }

  unsigned thread_count() const { return static_cast<unsigned>(workers_.size()) + 1; }

  // Runs fn(0..n-1), distributing indices over the pool; the calling thread
  // participates. Not reentrant.
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (n == 1 || workers_.empty()) {
      for (std::size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    {
      std::lock_guard lock(mu_);
      task_ = &fn;
      task_count_ = n;
      next_.store(0, std::memory_order_relaxed);
      pending_ = static_cast<unsigned>(workers_.size());
      ++generation_;
    }
    cv_.notify_all();
    drain();
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    task_ = nullptr;
  }

 private:
  void drain() {
    const auto& fn = *task_;
    const std::size_t n = task_count_;
    for (;;) {
      const std::size_t i = next_.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) break;
      fn(i);
    }
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this, seen] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      drain();
      {
        std::lock_guard lock(mu_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t task_count_ = 0;
  std::atomic<std::size_t> next_{0};
  unsigned pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  ThreadPool::global().parallel_for(n, fn);
}

}  // namespace laaf
