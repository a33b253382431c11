#pragma once

#include <cstddef>
#include <functional>

namespace anglereloc {

// Worker cap: ANGLERELOC_THREADS when set to a positive integer, otherwise
// the hardware concurrency (at least 1).
int MaxThreads();

// Runs fn(i) for i in [0, n) on up to MaxThreads() threads in contiguous
// chunks. fn must only write to per-index state; callers reduce in order.
void ParallelFor(size_t n, const std::function<void(size_t)>& fn);

}  // namespace anglereloc
