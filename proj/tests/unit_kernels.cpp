#include <doctest.h>

#include "smpc/kernels.hpp"

using namespace smpc;

// The OpenMP kernels must match the serial references bit for bit: mod-2^k
// integer arithmetic is order independent.
TEST_CASE("parallel matmul equals serial reference") {
  Rng rng(42);
  const size_t shapes[][3] = {{1, 1, 1}, {3, 4, 2}, {7, 13, 5}, {33, 17, 65}, {64, 64, 64}};
  for (const RingSpec spec : {RingSpec::with_bits(64), RingSpec::with_bits(32)}) {
    for (const auto& sh : shapes) {
      RingMatrix a = RingMatrix::random(sh[0], sh[1], spec, rng);
      RingMatrix b = RingMatrix::random(sh[1], sh[2], spec, rng);
      CHECK(kernels::matmul(a, b, spec).v == kernels::matmul_serial(a, b, spec).v);
    }
  }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  RingSpec spec = RingSpec::with_bits(64);
  Rng rng(1);
  RingMatrix a = RingMatrix::random(2, 3, spec, rng);
  RingMatrix b = RingMatrix::random(4, 2, spec, rng);
  CHECK_THROWS_AS(kernels::matmul(a, b, spec), ContractError);
}

TEST_CASE("permutation application matches the paper convention") {
  // perm = [2,1,3] (1-based) sends x to [x2, x1, x3].
  std::vector<size_t> perm = {1, 0, 2};
  std::vector<Ring> x = {10, 20, 30};
  CHECK(kernels::apply_perm(perm, x) == std::vector<Ring>{20, 10, 30});
  CHECK(kernels::apply_perm_serial(perm, x) == std::vector<Ring>{20, 10, 30});
}

TEST_CASE("compose and invert obey apply semantics") {
  Rng rng(5);
  const size_t n = 37;
  std::vector<size_t> rho(n), tau(n);
  for (size_t i = 0; i < n; ++i) rho[i] = tau[i] = i;
  for (size_t i = n; i > 1; --i) std::swap(rho[i - 1], rho[rng.next_below(i)]);
  for (size_t i = n; i > 1; --i) std::swap(tau[i - 1], tau[rng.next_below(i)]);
  std::vector<Ring> x(n);
  for (auto& v : x) v = rng.next();

  auto lhs = kernels::apply_perm(kernels::compose_perm(rho, tau), x);
  auto rhs = kernels::apply_perm(rho, kernels::apply_perm(tau, x));
  CHECK(lhs == rhs);

  auto inv = kernels::invert_perm(rho);
  CHECK(kernels::apply_perm(inv, kernels::apply_perm(rho, x)) == x);
}

TEST_CASE("row-wise permutation, gather, shift kernels") {
  RingSpec spec = RingSpec::with_bits(64);
  Rng rng(9);
  RingMatrix m = RingMatrix::random(4, 6, spec, rng);
  std::vector<size_t> perm = {5, 4, 3, 2, 1, 0};
  RingMatrix p = kernels::apply_perm_rows(perm, m);
  for (size_t r = 0; r < 4; ++r)
    for (size_t c = 0; c < 6; ++c) CHECK(p.at(r, c) == m.at(r, 5 - c));

  std::vector<size_t> rows = {2, 0};
  RingMatrix g = kernels::gather_rows(m, rows);
  CHECK(g.rows == 2);
  CHECK(g.at(0, 3) == m.at(2, 3));
  CHECK(g.at(1, 5) == m.at(0, 5));

  std::vector<size_t> cols = {1, 5};
  RingMatrix gc = kernels::gather_cols(m, cols);
  CHECK(gc.cols == 2);
  CHECK(gc.at(3, 0) == m.at(3, 1));
  CHECK(gc.at(0, 1) == m.at(0, 5));

  FixedPointCodec codec(64, 16);
  RingMatrix enc(1, 2);
  enc.at(0, 0) = codec.ring.mul(codec.encode(1.5), codec.encode(2.0));
  enc.at(0, 1) = codec.ring.mul(codec.encode(-1.5), codec.encode(2.0));
  RingMatrix sh = kernels::arith_shift(enc, 16, codec.ring);
  CHECK(sh.at(0, 0) == codec.encode(3.0));
  CHECK(sh.at(0, 1) == codec.encode(-3.0));
}

TEST_CASE("elementwise add/sub/scale") {
  RingSpec spec = RingSpec::with_bits(64);
  Rng rng(13);
  RingMatrix a = RingMatrix::random(5, 5, spec, rng);
  RingMatrix b = RingMatrix::random(5, 5, spec, rng);
  RingMatrix s = kernels::add(a, b, spec);
  RingMatrix d = kernels::sub(s, b, spec);
  CHECK(d.v == a.v);
  CHECK(kernels::add(a, b, spec).v == kernels::add_serial(a, b, spec).v);
  RingMatrix t = kernels::scale(a, 3, spec);
  for (size_t i = 0; i < a.size(); ++i) CHECK(t.v[i] == spec.mul(a.v[i], 3));
}
