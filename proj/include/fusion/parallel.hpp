#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace fusion {

/// How independent work units (replicates, imputations, study replications)
/// are dispatched. Both paths run the same per-unit kernel and write into
/// per-unit slots, so their results are bit-identical.
enum class Execution { Serial, Parallel };

void set_thread_count(int threads);
int thread_count();

/// Runs fn(i) for i in [0, n). The serial path is the reference; the parallel
/// path is an OpenMP loop. If any unit throws, the exception from the lowest
/// failing index is rethrown after the loop, matching the serial behavior.
template <class Fn>
void for_each_index(std::size_t n, Execution execution, Fn&& fn)
{
    if (execution == Execution::Serial || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> failures(n);
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (long long i = 0; i < count; ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
            failures[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& failure : failures)
        if (failure) std::rethrow_exception(failure);
}

}  // namespace fusion
