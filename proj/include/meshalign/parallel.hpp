#pragma once

namespace meshalign {

/// Caps the worker pool used by the data-parallel kernels. Values < 1
/// restore the default (all available cores).
void set_thread_count(int threads);
int thread_count();

}  // namespace meshalign
