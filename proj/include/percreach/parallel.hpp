#pragma once

#include <cstddef>

namespace percreach {

// Worker budget shared by every parallel loop. Defaults to the
// PERCREACH_WORKERS environment variable, else the hardware thread count.
int worker_count();
void set_worker_count(int n);

}  // namespace percreach
