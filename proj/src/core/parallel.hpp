#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace m2d2 {

// Worker cap: M2D2_THREADS when set, else hardware concurrency (at most 8).
inline std::size_t max_threads() {
    if (const char* env = std::getenv("M2D2_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    std::size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    return hw < 8 ? hw : 8;
}

// Runs body(i) for i in [0, n). Work is split into contiguous chunks; results
// must be written to disjoint slots so thread count never affects output.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    std::size_t workers = std::min(max_threads(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace m2d2
