#pragma once

#include <utility>

#include "smpc/ring.hpp"

namespace smpc {

// One party's additive share of a matrix. values_1 + values_2 = M (mod 2^k).
struct ShareMatrix {
  int party = 1;  // 1 or 2
  RingMatrix m;
};

// Split M into two additive shares; share 1 is sampled uniformly from rng.
std::pair<ShareMatrix, ShareMatrix> share(const RingMatrix& m, const RingSpec& spec, Rng& rng);

// Elementwise ring sum. Shapes must match and party ids must be {1,2}.
RingMatrix reconstruct(const ShareMatrix& s1, const ShareMatrix& s2, const RingSpec& spec);

}  // namespace smpc
