#pragma once

#include <cstddef>
#include <functional>

namespace brakenet {

// Worker count: BRAKENET_THREADS if set and positive, else hardware concurrency.
std::size_t thread_count();

// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker;
// callers keep results deterministic by writing to per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace brakenet
