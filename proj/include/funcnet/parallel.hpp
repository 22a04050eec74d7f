#pragma once

#include <cstddef>
#include <functional>

namespace funcnet {

/// Caps the worker count used by parallel_for. Values below 1 mean 1.
void set_num_threads(int n);
[[nodiscard]] int num_threads();

/// Worker count from FUNCNET_THREADS, or 1 when unset or malformed.
[[nodiscard]] int threads_from_env();

/// Runs body(i) for i in [0, n). Work is split into contiguous static chunks,
/// so callers that write only to slot i get results independent of the worker
/// count. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace funcnet
