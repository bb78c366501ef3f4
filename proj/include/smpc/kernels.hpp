#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "smpc/ring.hpp"

namespace smpc::kernels {

// OpenMP-parallel kernels used by every protocol's local computation step.
// Arithmetic over Z_2^k is exact and order-independent, so the parallel
// kernels are bit-identical to the serial references kept below for tests.

// C = A * B over Z_2^k. A: m x n, B: n x p.
RingMatrix matmul(const RingMatrix& a, const RingMatrix& b, const RingSpec& spec);

// Serial reference for matmul; tests compare against it.
RingMatrix matmul_serial(const RingMatrix& a, const RingMatrix& b, const RingSpec& spec);

// Elementwise c = a + b and c = a - b.
RingMatrix add(const RingMatrix& a, const RingMatrix& b, const RingSpec& spec);
RingMatrix sub(const RingMatrix& a, const RingMatrix& b, const RingSpec& spec);
RingMatrix add_serial(const RingMatrix& a, const RingMatrix& b, const RingSpec& spec);

// c = s * a for a public ring scalar s.
RingMatrix scale(const RingMatrix& a, Ring s, const RingSpec& spec);

// out[j] = x[perm[j]]; the paper-style application where perm = [2,1,3]
// sends x to [x2, x1, x3] (1-based in prose, 0-based here).
std::vector<Ring> apply_perm(std::span<const size_t> perm, std::span<const Ring> x);
std::vector<Ring> apply_perm_serial(std::span<const size_t> perm, std::span<const Ring> x);

// Row-wise permutation of an r x n matrix: every row permuted by perm.
RingMatrix apply_perm_rows(std::span<const size_t> perm, const RingMatrix& m);

// Elementwise arithmetic shift by f (sign-preserving on k bits).
RingMatrix arith_shift(const RingMatrix& a, int f, const RingSpec& spec);

// inv[perm[j]] = j.
std::vector<size_t> invert_perm(std::span<const size_t> perm);

// compose(rho, tau) applies tau first, then rho: out[j] = tau[rho[j]], so
// apply_perm(compose(rho,tau), x) == apply_perm(rho, apply_perm(tau, x)).
std::vector<size_t> compose_perm(std::span<const size_t> rho, std::span<const size_t> tau);

// Gather rows/columns by index list.
RingMatrix gather_rows(const RingMatrix& m, std::span<const size_t> rows);
RingMatrix gather_cols(const RingMatrix& m, std::span<const size_t> cols);

}  // namespace smpc::kernels
