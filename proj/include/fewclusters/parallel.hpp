#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fewclusters {

/// Worker count used when a call does not pass one explicitly. Resolution
/// order: set_default_threads(), then FEWCLUSTERS_THREADS, then hardware.
unsigned default_threads();
void set_default_threads(unsigned threads);

namespace detail {
bool& inside_worker() noexcept;
}

/**
 * Runs body(i) for i in [0, n) over a static partition of the range.
 *
 * Each index is visited exactly once and results are expected to be written
 * to index-addressed slots, so the outcome does not depend on the worker
 * count. Calls made from inside a worker run inline. The first exception
 * thrown by any worker is rethrown on the calling thread.
 */
template <class Body>
void parallel_for(std::size_t n, Body&& body, unsigned threads = 0) {
    if (threads == 0) threads = default_threads();
    if (threads <= 1 || n < 2 || detail::inside_worker()) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(threads, n);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                detail::inside_worker() = true;
                const std::size_t begin = n * w / workers;
                const std::size_t end = n * (w + 1) / workers;
                try {
                    for (std::size_t i = begin; i < end; ++i) body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
                detail::inside_worker() = false;
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace fewclusters
