#include "smpc/sharing.hpp"

#include "smpc/error.hpp"
#include "smpc/kernels.hpp"

namespace smpc {

std::pair<ShareMatrix, ShareMatrix> share(const RingMatrix& m, const RingSpec& spec, Rng& rng) {
  ShareMatrix s1{1, RingMatrix(m.rows, m.cols)};
  ShareMatrix s2{2, RingMatrix(m.rows, m.cols)};
  for (size_t i = 0; i < m.size(); ++i) {
    const Ring r = spec.random(rng);
    s1.m.v[i] = r;
    s2.m.v[i] = spec.sub(m.v[i], r);
  }
  return {std::move(s1), std::move(s2)};
}

RingMatrix reconstruct(const ShareMatrix& s1, const ShareMatrix& s2, const RingSpec& spec) {
  if (!s1.m.same_shape(s2.m)) throw ContractError("reconstruct: shape mismatch");
  if (!((s1.party == 1 && s2.party == 2) || (s1.party == 2 && s2.party == 1)))
    throw ContractError("reconstruct: party ids must be {1,2}");
  return kernels::add(s1.m, s2.m, spec);
}

}  // namespace smpc
