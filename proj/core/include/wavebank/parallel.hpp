#pragma once

#include <cstdint>
#include <functional>

namespace wavebank {

// Process-wide worker count, set once from the CLI --threads flag.
// Defaults to 1 (fully serial).
void set_max_threads(int n);
int max_threads();

// Runs fn(begin, end) over a partition of [0, n). Work is split into
// contiguous chunks, one per worker. Callers must only use this where each
// index writes to its own disjoint outputs, so the result is bit-identical
// for every thread count. `min_per_thread` keeps small loops serial.
void parallel_for(int64_t n, int64_t min_per_thread,
                  const std::function<void(int64_t, int64_t)>& fn);

}  // namespace wavebank
