#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace kintrace {

// Run f(i) for i in [0,n) on `workers` threads with a static block partition.
// Each item must derive its randomness from its own index (counter-based
// streams), so the result is identical for any worker count.
template <class F>
inline void parallel_for(std::size_t n, int workers, F&& f) {
    if (n == 0) return;
    if (workers < 1) workers = 1;
    const std::size_t w = std::min<std::size_t>(workers, n);
    if (w == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(w);
    const std::size_t chunk = (n + w - 1) / w;
    for (std::size_t t = 0; t < w; ++t) {
        const std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &f] {
            for (std::size_t i = lo; i < hi; ++i) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

// Pairwise summation in fixed index order: the result does not depend on how
// the inputs were produced, only on their order.
inline double pairwise_sum(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
    const std::size_t n = hi - lo;
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += v[i];
        return s;
    }
    const std::size_t mid = lo + n / 2;
    return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}

inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v, 0, v.size()); }

}  // namespace kintrace
