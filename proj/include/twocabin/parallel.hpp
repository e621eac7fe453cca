#pragma once
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace twocabin {

inline int effective_workers(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Static-partition parallel map over [0, n).  Results must be written to
/// disjoint slots; the partition is deterministic, so numerical output does
/// not depend on the worker count.
inline void parallel_for(std::size_t n, int workers,
                         const std::function<void(std::size_t)>& fn) {
    workers = effective_workers(workers);
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (std::size_t k = 0; k < w; ++k) {
        pool.emplace_back([&, k] {
            for (std::size_t i = k; i < n; i += w) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace twocabin
