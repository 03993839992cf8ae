#pragma once

#include <ostream>

namespace mmofl {

/// Brute-force / duplicate-implementation checks behind the derived numbers
/// used elsewhere (forward pass, gradients, prototype recurrence, quantizer
/// bound, SNR scaling, injector counting, partition concentration, stream
/// index arithmetic, nearest-centroid separability). Prints one row per
/// oracle; returns the number of failures.
int run_oracles(std::ostream& out);

}  // namespace mmofl
