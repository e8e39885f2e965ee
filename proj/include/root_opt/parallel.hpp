#pragma once

#include <cstddef>
#include <functional>

namespace root_opt {

// Worker cap from ROOT_OPT_THREADS (0 or unset = hardware concurrency).
std::size_t worker_count();

// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
// write results by index so the outcome does not depend on scheduling.
// The first exception thrown by any worker is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace root_opt
