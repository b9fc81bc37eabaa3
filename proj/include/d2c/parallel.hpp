#pragma once

#include <cstddef>
#include <functional>

namespace d2c {

/// Resolves a requested worker count: 0 means the THREADS environment
/// variable if set, otherwise hardware concurrency.
std::size_t resolve_threads(std::size_t requested);

/// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
/// executed exactly once; callers write results into per-index slots so the
/// outcome is independent of scheduling. If any body throws, the exception
/// from the lowest failing index is rethrown after all workers finish.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace d2c
