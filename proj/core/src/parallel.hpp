#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tts::detail {

// Runs f(i) for i in [0, n). Work is claimed dynamically; each index runs exactly once.
// The first exception thrown by any worker is rethrown on the calling thread.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                f(i);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    {
        const auto count = static_cast<std::size_t>(threads) < n ? threads : static_cast<unsigned>(n);
        std::vector<std::jthread> workers;
        workers.reserve(count);
        for (unsigned w = 0; w < count; ++w) workers.emplace_back(work);
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace tts::detail
