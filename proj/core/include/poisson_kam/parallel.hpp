#pragma once

#include <cstddef>
#include <functional>

namespace poisson_kam {

/// Worker threads available to the library: POISSON_KAM_THREADS if set and
/// positive, otherwise the hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, count). Results must be written to
/// per-index slots so that the outcome does not depend on scheduling. The
/// first exception thrown by any body is rethrown on the caller.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace poisson_kam
