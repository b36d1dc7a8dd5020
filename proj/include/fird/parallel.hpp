#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fird {

/// Row blocks whose boundaries depend only on N, never on the thread count, so
/// per-block partial sums combined in block order are reproducible bit for bit.
struct RowChunks {
    std::size_t n_rows = 0;
    std::size_t chunk = 1;

    explicit RowChunks(std::size_t rows, std::size_t min_chunk = 512, std::size_t max_chunks = 64)
        : n_rows(rows), chunk(std::max<std::size_t>(min_chunk, (rows + max_chunks - 1) / max_chunks)) {}

    std::size_t count() const { return (n_rows + chunk - 1) / chunk; }
    std::size_t begin(std::size_t c) const { return c * chunk; }
    std::size_t end(std::size_t c) const { return std::min(n_rows, (c + 1) * chunk); }
};

/// 0 resolves to FIRD_THREADS, then to the hardware concurrency.
inline std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("FIRD_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return std::max<unsigned>(1, std::thread::hardware_concurrency());
}

/// Runs fn(task) for task in [0, n_tasks) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n_tasks, std::size_t threads, Fn&& fn) {
    threads = std::min(resolve_threads(threads), n_tasks);
    if (threads <= 1) {
        for (std::size_t t = 0; t < n_tasks; ++t) fn(t);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            std::size_t t = next.fetch_add(1);
            if (t >= n_tasks) return;
            try {
                fn(t);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(n_tasks);
                return;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace fird
