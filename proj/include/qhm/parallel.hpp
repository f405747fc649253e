#pragma once

#include <cstddef>
#include <functional>

namespace qhm {

// Worker cap for parallel loops; 0 selects hardware concurrency.
void set_threads(int n);
int threads();

// Runs fn(i) for i in [0, n), chunked over the worker pool.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace qhm
