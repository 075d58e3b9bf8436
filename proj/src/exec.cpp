#include "poquim/exec.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace poquim {

namespace {
Exec g_exec = Exec::parallel;
int g_threads = 0;  // 0 = OpenMP default
}  // namespace

Exec default_exec() { return g_exec; }
void set_default_exec(Exec e) { g_exec = e; }

int max_threads() {
#ifdef _OPENMP
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  return 1;
#endif
}

void set_max_threads(int n) {
  g_threads = n;
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

}  // namespace poquim
