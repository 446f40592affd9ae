#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#if defined(__SSE__) || defined(__x86_64__)
#include <xmmintrin.h>
#define STATESMIX_HAVE_MXCSR 1
#endif

namespace statesmix {

// Sets flush-to-zero and denormals-are-zero on the calling thread for its
// lifetime. Codec threads run under it so subnormal optimizer moments do
// not fall onto the slow path; both codec directions use the same mode.
class DenormalGuard {
 public:
  DenormalGuard() {
#ifdef STATESMIX_HAVE_MXCSR
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040u);
#endif
  }
  ~DenormalGuard() {
#ifdef STATESMIX_HAVE_MXCSR
    _mm_setcsr(saved_);
#endif
  }
  DenormalGuard(const DenormalGuard&) = delete;
  DenormalGuard& operator=(const DenormalGuard&) = delete;

 private:
  unsigned saved_ = 0;
};

// Runs a block function over a fixed block decomposition. Block boundaries
// depend only on (n, grain), never on the worker count, so any computation
// whose per-block results are independent is bitwise identical for every
// thread count.
class ThreadPool {
 public:
  explicit ThreadPool(unsigned threads) {
    for (unsigned i = 1; i < threads; ++i) workers_.emplace_back([this] { worker_loop(); });
  }
  ~ThreadPool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }
  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  unsigned size() const { return static_cast<unsigned>(workers_.size()) + 1; }

  void run_blocks(size_t n_blocks, const std::function<void(size_t)>& fn) {
    if (workers_.empty() || n_blocks <= 1) {
      for (size_t b = 0; b < n_blocks; ++b) fn(b);
      return;
    }
    {
      std::lock_guard lock(mu_);
      job_ = &fn;
      n_blocks_ = n_blocks;
      next_.store(0);
      pending_ = workers_.size();
      ++generation_;
    }
    cv_.notify_all();
    drain();
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    job_ = nullptr;
  }

 private:
  void drain() {
    for (size_t b; (b = next_.fetch_add(1)) < n_blocks_;) (*job_)(b);
  }

  void worker_loop() {
    DenormalGuard ftz;
    size_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      drain();
      std::lock_guard lock(mu_);
      if (--pending_ == 0) done_cv_.notify_one();
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(size_t)>* job_ = nullptr;
  size_t n_blocks_ = 0;
  std::atomic<size_t> next_{0};
  size_t pending_ = 0;
  size_t generation_ = 0;
  bool stop_ = false;
};

// Calls fn(begin, end) for consecutive ranges of `grain` elements.
template <class F>
void parallel_for(ThreadPool* pool, size_t n, size_t grain, F&& fn) {
  const size_t blocks = (n + grain - 1) / grain;
  auto block = [&](size_t b) { fn(b * grain, std::min(n, (b + 1) * grain)); };
  if (pool == nullptr) {
    for (size_t b = 0; b < blocks; ++b) block(b);
  } else {
    pool->run_blocks(blocks, block);
  }
}

}  // namespace statesmix
