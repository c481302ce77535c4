#pragma once

#include <cstddef>
#include <functional>

namespace drtsar {

/// Number of workers for a requested count (0 means hardware concurrency).
int resolve_threads(int requested);

/// Calls fn(i) for i in [0, n). Indices are independent work items; with
/// threads == 1 they run in order on the calling thread. Exceptions thrown by
/// fn are rethrown on the caller (first one wins).
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace drtsar
