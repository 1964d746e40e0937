#pragma once

#include <cstdlib>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace spader {

/// Keeps large tensor buffers on the heap instead of fresh mmap'd pages.
/// Training allocates and frees multi-megabyte buffers every step; with the
/// default thresholds each one costs page faults. No-op outside glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace spader
