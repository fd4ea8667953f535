#pragma once

#include <cstddef>
#include <functional>

namespace seqgan {

/// Worker count: SEQGAN_THREADS if set and positive, else hardware concurrency.
std::size_t thread_count();

/// Runs body(i) for i in [0, n) over the worker pool.
///
/// Results must be written to per-index slots; the call is then independent
/// of scheduling. Calls made from inside a worker run sequentially. The
/// exception of the lowest failing index is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace seqgan
