#include <doctest.h>

#include <cmath>

#include "smpc/ring.hpp"

using namespace smpc;

TEST_CASE("fixed-point encode examples") {
  FixedPointCodec c(64, 16);
  CHECK(c.encode(1.5) == 98304);
  CHECK(c.encode(0.0) == 0);
  CHECK(c.encode(-1.0) == (0ULL - 65536ULL));  // 2^64 - 65536
}

TEST_CASE("fixed-point decode examples") {
  FixedPointCodec c(64, 16);
  CHECK(c.decode(98304) == doctest::Approx(1.5));
  CHECK(c.decode(0ULL - 65536ULL) == doctest::Approx(-1.0));
  const double pi = 3.14159265358979;
  CHECK(std::fabs(c.decode(c.encode(pi)) - pi) <= std::ldexp(1.0, -16));
}

TEST_CASE("encode range error is a hard failure") {
  FixedPointCodec c(64, 16);
  CHECK_THROWS_AS(c.encode(std::ldexp(1.0, 47)), RangeError);
  CHECK_THROWS_AS(c.encode(-std::ldexp(1.0, 47)), RangeError);
  CHECK_NOTHROW(c.encode(std::ldexp(1.0, 46)));
}

TEST_CASE("ring arithmetic wraps") {
  RingSpec r = RingSpec::with_bits(64);
  CHECK(r.add(~0ULL, 1) == 0);  // 2^64 - 1 + 1
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const Ring x = rng.next();
    CHECK(r.sub(x, x) == 0);
    CHECK(r.add(x, r.neg(x)) == 0);
  }
}

TEST_CASE("fixed-point product with rescale") {
  FixedPointCodec c(64, 16);
  const Ring prod = c.ring.mul(c.encode(2.0), c.encode(3.0));
  CHECK(c.ring.arith_shift(prod, 16) == c.encode(6.0));
  const Ring nprod = c.ring.mul(c.encode(-2.0), c.encode(3.0));
  CHECK(c.ring.arith_shift(nprod, 16) == c.encode(-6.0));
}

TEST_CASE("ring algebra properties (randomized)") {
  RingSpec r = RingSpec::with_bits(64);
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const Ring a = rng.next(), b = rng.next(), c = rng.next();
    CHECK(r.add(a, b) == r.add(b, a));
    CHECK(r.mul(a, r.add(b, c)) == r.add(r.mul(a, b), r.mul(a, c)));
  }
}

TEST_CASE("fixed-point roundtrip bound on 10^4 random reals") {
  FixedPointCodec c(64, 16);
  Rng rng(3);
  const double bound = std::ldexp(1.0, -16);
  for (int i = 0; i < 10000; ++i) {
    const double x = (rng.next_unit() - 0.5) * 1000.0;
    CHECK(std::fabs(c.decode(c.encode(x)) - x) <= bound);
  }
}

TEST_CASE("negation symmetry of encode") {
  FixedPointCodec c(64, 16);
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double x = (rng.next_unit() - 0.5) * 50.0;
    CHECK(c.encode(-x) == c.ring.neg(c.encode(x)));
  }
}

TEST_CASE("narrow ring k=32") {
  FixedPointCodec c(32, 8);
  CHECK(c.encode(1.5) == 384);
  CHECK(c.decode(c.encode(-2.25)) == doctest::Approx(-2.25));
  RingSpec r = c.ring;
  CHECK(r.add(r.mask, 1) == 0);
  CHECK(r.to_signed(r.mask) == -1);
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const Ring x = r.random(rng);
    CHECK(x <= r.mask);
    CHECK(r.add(x, r.neg(x)) == 0);
  }
}

TEST_CASE("arithmetic shift is sign preserving") {
  RingSpec r = RingSpec::with_bits(64);
  CHECK(r.arith_shift(1ULL << 16, 16) == 1);
  CHECK(r.arith_shift(r.from_signed(-(1LL << 16)), 16) == r.from_signed(-1));
  CHECK(r.arith_shift(12345, 0) == 12345);
}
