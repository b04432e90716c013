#pragma once

#include <cstddef>
#include <functional>

namespace ceda {

/// Worker cap for parallel_for; 0 means hardware concurrency. Results never
/// depend on this value.
void set_thread_count(unsigned count);
unsigned thread_count();

/// Runs fn(i) for i in [0, n). Each index is handled exactly once; the first
/// exception thrown by any worker is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ceda
