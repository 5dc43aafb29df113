#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace gtv {

/// Default worker count: $GTVSEG_THREADS if set, otherwise 1.
inline std::size_t default_thread_count() {
    if (const char* env = std::getenv("GTVSEG_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (...) {
        }
    }
    return 1;
}

/// Fixed-size pool running static-chunked index loops.
///
/// Only element-wise maps go through the pool; every reduction in the library
/// runs sequentially in index order, so results do not depend on the number of
/// workers.
class ThreadPool {
public:
    explicit ThreadPool(std::size_t threads = default_thread_count())
        : n_threads_(std::max<std::size_t>(1, threads)) {
        for (std::size_t t = 1; t < n_threads_; ++t) {
            workers_.emplace_back([this, t] { worker_loop(t); });
        }
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    ~ThreadPool() {
        {
            std::lock_guard lock(mutex_);
            stopping_ = true;
            ++generation_;
        }
        wake_.notify_all();
        for (auto& w : workers_) w.join();
    }

    std::size_t size() const noexcept { return n_threads_; }

    /// Calls body(i) for every i in [0, n). Blocks until done.
    template <typename Body>
    void parallel_for(std::size_t n, Body&& body) {
        if (n_threads_ == 1 || n < 2 * n_threads_) {
            for (std::size_t i = 0; i < n; ++i) body(i);
            return;
        }
        std::function<void(std::size_t, std::size_t)> chunk = [&body](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        };
        {
            std::lock_guard lock(mutex_);
            task_ = &chunk;
            task_size_ = n;
            pending_ = n_threads_ - 1;
            ++generation_;
        }
        wake_.notify_all();
        run_chunk(0, chunk, n);
        std::unique_lock lock(mutex_);
        done_.wait(lock, [this] { return pending_ == 0; });
        task_ = nullptr;
    }

private:
    void run_chunk(std::size_t t, const std::function<void(std::size_t, std::size_t)>& chunk,
                   std::size_t n) const {
        const std::size_t per = (n + n_threads_ - 1) / n_threads_;
        const std::size_t lo = std::min(n, t * per);
        const std::size_t hi = std::min(n, lo + per);
        if (lo < hi) chunk(lo, hi);
    }

    void worker_loop(std::size_t t) {
        std::size_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t, std::size_t)>* task = nullptr;
            std::size_t n = 0;
            {
                std::unique_lock lock(mutex_);
                wake_.wait(lock, [&] { return generation_ != seen; });
                seen = generation_;
                if (stopping_) return;
                task = task_;
                n = task_size_;
            }
            if (task) run_chunk(t, *task, n);
            {
                std::lock_guard lock(mutex_);
                if (--pending_ == 0) done_.notify_one();
            }
        }
    }

    std::size_t n_threads_;
    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::condition_variable done_;
    const std::function<void(std::size_t, std::size_t)>* task_ = nullptr;
    std::size_t task_size_ = 0;
    std::size_t pending_ = 0;
    std::size_t generation_ = 0;
    bool stopping_ = false;
};

}  // namespace gtv
