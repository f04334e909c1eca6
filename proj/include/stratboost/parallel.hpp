#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace stratboost {

/// Default worker count: STRATBOOST_THREADS if set and >= 1, else 1 (serial).
inline int default_threads() {
    if (const char* env = std::getenv("STRATBOOST_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    return 1;
}

/// Runs fn(i) for i in [begin, end) on up to `threads` workers.
/// Chunking is static and contiguous, so writes into per-index slots produce
/// the same result as a serial run. The first exception thrown by any worker
/// is rethrown after all workers join.
template <class Fn>
void parallel_for(std::int64_t begin, std::int64_t end, int threads, Fn&& fn) {
    const std::int64_t count = end - begin;
    if (count <= 0) return;
    int workers = std::max(1, threads);
    workers = static_cast<int>(std::min<std::int64_t>(workers, count));
    if (workers == 1) {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    auto run_chunk = [&](int w) {
        const std::int64_t lo = begin + count * w / workers;
        const std::int64_t hi = begin + count * (w + 1) / workers;
        try {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        } catch (...) {
            errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int w = 1; w < workers; ++w) pool.emplace_back(run_chunk, w);
    run_chunk(0);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace stratboost
