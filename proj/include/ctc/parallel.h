#pragma once

#include <cstddef>
#include <functional>

namespace ctc {

// Worker count used by element-parallel stages. Initialized from the
// CTC_THREADS environment variable; defaults to the hardware concurrency.
int worker_count();
void set_worker_count(int workers);

// Runs fn(begin, end) over contiguous blocks of [0, n). Every index is
// visited exactly once; results must not depend on the partitioning.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace ctc
