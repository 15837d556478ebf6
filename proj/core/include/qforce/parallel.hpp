// Deterministic parallel loops and reductions
#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace qforce {

/// 0 means "all hardware threads".
inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0)
        return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

/**
 * @brief Calls fn(i) for i in [0, n) on up to `threads` threads.
 *
 * Work is split into contiguous blocks; results must be written to per-index
 * slots so the outcome does not depend on the thread count.
 */
template <typename Fn> void parallel_for(std::size_t n, unsigned threads, Fn &&fn) {
    const std::size_t t = std::min<std::size_t>(resolve_threads(threads), n);
    if (t <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(t);
        for (std::size_t w = 0; w < t; ++w) {
            const std::size_t lo = n * w / t, hi = n * (w + 1) / t;
            pool.emplace_back([&, lo, hi] {
                try {
                    for (std::size_t i = lo; i < hi; ++i)
                        fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                }
            });
        }
    }
    if (error)
        std::rethrow_exception(error);
}

/// Pairwise (tree) summation with a fixed association order.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v)
            s += x;
        return s;
    }
    const std::size_t h = v.size() / 2;
    return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

} // namespace qforce
