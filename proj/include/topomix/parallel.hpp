#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace topomix {

// Worker cap: TOPOMIX_THREADS wins when set, otherwise the hardware count.
inline unsigned thread_cap() {
    if (const char* env = std::getenv("TOPOMIX_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Runs fn(i) for i in [0, n). Each index writes only its own output slot,
// so the result is identical no matter how the work is scheduled.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const unsigned cap = std::min<std::size_t>(thread_cap(), n);
    if (cap <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(cap);
    for (unsigned w = 0; w < cap; ++w) {
        workers.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += cap) fn(i);
        });
    }
    for (auto& t : workers) t.join();
}

} // namespace topomix
