#pragma once

namespace lfm {

/// Caps the OpenMP worker pool used by the parallel kernels. n <= 0 restores
/// the runtime default.
void set_thread_count(int n);

/// Current cap on worker threads.
int thread_count();

}  // namespace lfm
