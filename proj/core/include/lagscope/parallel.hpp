#pragma once

#include <cstddef>
#include <functional>

namespace lagscope {

/// Thread cap for intra-run parallel evaluation. Reads LAGSCOPE_THREADS once;
/// defaults to the hardware concurrency, never less than 1.
std::size_t max_threads();

/// Runs body(i) for i in [0, count). Each index is handled by exactly one
/// worker, so callers that write results into per-index slots and reduce them
/// afterwards in index order get results independent of the thread count.
/// The first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  std::size_t threads = 0);

}  // namespace lagscope
