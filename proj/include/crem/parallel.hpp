#ifndef CREM_PARALLEL_HPP
#define CREM_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace crem
{

inline unsigned default_worker_count()
{
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1U : hw;
}

/// Evaluates fn(i) for i in [0, count) on a bounded pool and stores each result
/// at index i, so the output does not depend on scheduling.
template < typename Fn >
auto map_indices(std::size_t count, Fn&& fn, unsigned workers = default_worker_count())
    -> std::vector< decltype(fn(std::size_t{})) >
{
    using Result = decltype(fn(std::size_t{}));
    std::vector< Result > out(count);
    workers = static_cast< unsigned >(std::clamp< std::size_t >(workers, 1, std::max< std::size_t >(count, 1)));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic< std::size_t > next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            try {
                out[i] = fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(count);
            }
        }
    };
    std::vector< std::thread > pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

} // namespace crem

#endif // CREM_PARALLEL_HPP
