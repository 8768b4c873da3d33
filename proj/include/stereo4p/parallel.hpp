#pragma once

#include <cstddef>
#include <functional>

namespace stereo4p {

/// Worker count used by parallel_for. Defaults to hardware concurrency.
int thread_count();
void set_thread_count(int n);

/// Runs fn(i) for i in [begin, end) split into contiguous blocks, one per
/// worker. Each index is visited exactly once; callers write disjoint
/// outputs so results never depend on the worker count.
void parallel_for(std::ptrdiff_t begin, std::ptrdiff_t end,
                  const std::function<void(std::ptrdiff_t)>& fn);

}  // namespace stereo4p
