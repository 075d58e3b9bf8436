#pragma once

namespace poquim {

/// Execution policy for the data-parallel kernels (class sweeps, Monte
/// Carlo loops). Serial is the reference implementation; Parallel uses
/// OpenMP when compiled in. Results are bit-identical between the two
/// because parallel reductions merge per-chunk partials in a fixed order.
enum class Exec { serial, parallel };

/// Process-wide default used by kernels that are not passed a policy.
Exec default_exec();
void set_default_exec(Exec e);

/// Number of worker threads the parallel policy may use.
int max_threads();
void set_max_threads(int n);

}  // namespace poquim
