#pragma once

namespace ee {

// Number of OpenMP threads used by the parallel kernels. 0 = library default.
void set_threads(int n);
int threads();

} // namespace ee
