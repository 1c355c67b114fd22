// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

namespace gcrf {

/// Worker count: hardware concurrency, capped by GCRF_THREADS when set.
int max_threads();

/// Runs body(i) for i in [0, n) on up to max_threads() threads. Iterations
/// must be independent. Exceptions are rethrown on the caller's thread.
void parallel_for(int n, const std::function<void(int)>& body);

}  // namespace gcrf
