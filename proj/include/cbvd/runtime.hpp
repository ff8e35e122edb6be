#pragma once

namespace cbvd {

/// Keeps large tensor buffers in the heap between training steps instead of
/// returning them to the kernel after every free. No-op outside glibc.
void tune_allocator();

} // namespace cbvd
