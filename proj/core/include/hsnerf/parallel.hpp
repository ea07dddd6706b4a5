#pragma once

#include <cstddef>
#include <exception>
#include <functional>

namespace hsnerf {

// Worker count used by parallel_for. Defaults to hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

// Runs body(i) for i in [0, n) on up to thread_count() workers using a
// static contiguous partition. The first exception thrown by any worker is
// rethrown on the calling thread after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// Raises glibc's mmap and trim thresholds so the per-step matrix temporaries
// are recycled from the heap instead of being mapped and unmapped on every
// training step. No-op on other allocators.
void tune_allocator();

}  // namespace hsnerf
