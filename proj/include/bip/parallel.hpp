#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bip::parallel {

// Runs fn(i) for every i in [0, count) on up to `workers` threads, pulling
// indices from a shared counter. Callers must write results by index so the
// outcome is independent of scheduling; the first exception stops the pool
// and is rethrown on the calling thread. workers == 0 is treated as 1.
template <typename Fn>
void for_index(std::size_t count, unsigned workers, Fn&& fn) {
    if (count == 0) return;
    const unsigned usable = workers == 0 ? 1u : workers;
    if (usable == 1 || count == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto drain = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(count);
                return;
            }
        }
    };

    const std::size_t spawn = std::min<std::size_t>(usable, count);
    std::vector<std::thread> pool;
    pool.reserve(spawn);
    for (std::size_t t = 0; t < spawn; ++t) pool.emplace_back(drain);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace bip::parallel
