#pragma once

#include <cstddef>
#include <functional>

namespace bps {

/// Worker count used by parallel_for (default 1).
void set_num_threads(std::size_t n);
std::size_t num_threads();

/**
 * Calls fn(i) for i in [begin, end) using up to num_threads() threads with a
 * static partition. Nested calls run serially. Callers must make each fn(i)
 * independent of the others so results do not depend on the thread count.
 */
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn);

}  // namespace bps
