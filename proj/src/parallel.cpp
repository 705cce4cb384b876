#include "lfm/parallel.hpp"

#include <omp.h>

#include "lfm/error.hpp"

namespace lfm {

void set_thread_count(int n) {
  if (n < 0) throw InvalidArgument("thread count must be >= 0");
  if (n > 0) omp_set_num_threads(n);
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace lfm
