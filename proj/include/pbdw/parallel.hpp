#pragma once

#include <cstddef>
#include <functional>

namespace pbdw {

/// Worker count: a positive request wins, otherwise PBDWKIT_THREADS, otherwise
/// the hardware concurrency.
int resolve_threads(int requested);

/// Runs body(i) for i in [0, count) on up to `threads` workers. Items are
/// handed out by index; callers write results into per-index slots so the
/// outcome never depends on scheduling. The first exception is rethrown.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

}  // namespace pbdw
