#pragma once

#include <functional>

namespace bknet {

// Runs fn(i) for i in [0, n). threads <= 1 executes serially on the
// calling thread. Work is split into contiguous index ranges, so results
// are bit-identical to the serial order whenever iterations are
// independent.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

// --threads value resolution: explicit > BK_THREADS env > 0 (serial).
int resolve_threads(int requested);

}  // namespace bknet
