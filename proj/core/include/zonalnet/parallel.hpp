#pragma once

#include <cstdint>
#include <functional>

namespace zonalnet::parallel {

// Number of worker threads ops may use. Defaults to the ZONALNET_THREADS
// environment variable, else 1. Results are bit-identical for any budget.
int thread_budget();
void set_thread_budget(int n);

// Splits [begin, end) into contiguous chunks and runs fn(chunk_begin,
// chunk_end) on worker threads. Chunks are disjoint, so workers never write
// the same element; each element's arithmetic stays in its single-thread
// order. Runs inline when the budget is 1 or the range is small.
void parallel_for(std::int64_t begin, std::int64_t end, std::int64_t grain,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace zonalnet::parallel
