#pragma once

#include <cstddef>
#include <functional>

namespace nfb {

// Caps the number of worker threads used by batched kernels. 0 restores the
// default (hardware concurrency).
void SetMaxThreads(std::size_t n);
std::size_t MaxThreads();

// Runs fn(begin, end) over disjoint chunks of [0, count). Callers must make
// each index's result independent of the chunking so that output is bitwise
// identical for any thread count.
void ParallelFor(std::size_t count, std::size_t min_chunk,
                 const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace nfb
