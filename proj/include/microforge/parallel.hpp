#pragma once

#include <cstddef>
#include <functional>

namespace microforge {

/// Worker count: MICROFORGE_THREADS when set to a positive integer, else the
/// hardware concurrency (at least 1).
int thread_count();

/// Calls fn(i) for i in [0, n) on up to thread_count() threads, in contiguous
/// static chunks. Callers write results to per-index slots, so the outcome does
/// not depend on scheduling. The first exception is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace microforge
