#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace markerforge {

// Runs fn(i) for i in [0, count) on `workers` threads (1 = inline on the
// caller). Indices are claimed from a shared counter, so fn must not depend
// on execution order. The first exception thrown by any worker is rethrown
// on the caller after all workers finish.
inline void parallel_for(int64_t count, int workers,
                         const std::function<void(int64_t)>& fn) {
    if (count <= 0) return;
    if (workers <= 1 || count == 1) {
        for (int64_t i = 0; i < count; ++i) fn(i);
        return;
    }

    std::atomic<int64_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;

    auto body = [&] {
        while (true) {
            const int64_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };

    const int n = static_cast<int>(
        std::min<int64_t>(workers, count));
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (int w = 0; w < n; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace markerforge
