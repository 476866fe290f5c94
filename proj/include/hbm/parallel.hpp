#pragma once

#include <cstddef>
#include <functional>

namespace hbm {

/// Worker count used by parallel_for. Defaults to 1.
void set_num_threads(int n);
int num_threads();

/// Runs body(i) for i in [0, n). Iterations must only write to
/// index-owned state; results are then independent of the thread count.
/// The first exception thrown by any iteration is rethrown. Nested calls
/// from inside a worker run serially.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace hbm
