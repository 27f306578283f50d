#pragma once

#include <cstddef>
#include <functional>

namespace emcad {

// Worker cap from EMCAD_THREADS (0 or unset = hardware concurrency).
int max_threads();

/// Runs body(i) for i in [0, count). Each index is processed by exactly one
/// worker, so results do not depend on the thread count as long as body(i)
/// only writes data owned by index i. Small workloads run inline.
void parallel_for(std::size_t count, std::size_t work_per_item,
                  const std::function<void(std::size_t)> &body);

} // namespace emcad
