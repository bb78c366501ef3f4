#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "smpc/error.hpp"
#include "smpc/rng.hpp"

namespace smpc {

// One element of Z_2^k, stored reduced (raw < 2^k). All arithmetic wraps.
using Ring = uint64_t;

// Ring parameters. k <= 64; the mask keeps values reduced after every op.
// Z_2^k is a quotient of Z_2^64, so computing in native uint64_t and masking
// is exact.
struct RingSpec {
  int k = 64;
  Ring mask = ~0ULL;

  static RingSpec with_bits(int k) {
    if (k < 2 || k > 64) throw ContractError("ring bit width must be in [2,64]");
    RingSpec s;
    s.k = k;
    s.mask = (k == 64) ? ~0ULL : ((1ULL << k) - 1);
    return s;
  }

  Ring reduce(uint64_t v) const { return v & mask; }
  Ring add(Ring a, Ring b) const { return (a + b) & mask; }
  Ring sub(Ring a, Ring b) const { return (a - b) & mask; }
  Ring mul(Ring a, Ring b) const { return (a * b) & mask; }
  Ring neg(Ring a) const { return (0 - a) & mask; }

  // Two's-complement interpretation on k bits.
  int64_t to_signed(Ring a) const {
    if (k == 64) return static_cast<int64_t>(a);
    const Ring half = 1ULL << (k - 1);
    return (a >= half) ? static_cast<int64_t>(a) - static_cast<int64_t>(1ULL << k)
                       : static_cast<int64_t>(a);
  }
  Ring from_signed(int64_t v) const { return static_cast<uint64_t>(v) & mask; }

  // Arithmetic (sign-preserving) right shift on the k-bit value.
  Ring arith_shift(Ring a, int f) const {
    if (f == 0) return a;
    return from_signed(to_signed(a) >> f);
  }

  Ring random(Rng& rng) const { return rng.next() & mask; }
};

// Fixed-point encoding: real r <-> round(r * 2^f) in Z_2^k, two's complement.
struct FixedPointCodec {
  RingSpec ring;
  int f = 16;

  FixedPointCodec() : ring(RingSpec::with_bits(64)) {}
  FixedPointCodec(int k, int frac) : ring(RingSpec::with_bits(k)), f(frac) {
    if (f < 0 || f >= k) throw ContractError("fractional bits must satisfy 0 <= f < k");
  }

  double scale() const { return std::ldexp(1.0, f); }

  // Representable range is (-2^(k-f-1), 2^(k-f-1)); out of range is a hard
  // failure, not saturation.
  Ring encode(double r) const {
    const double bound = std::ldexp(1.0, ring.k - f - 1);
    if (!(std::fabs(r) < bound)) throw RangeError("fixed-point encode out of range");
    const double scaled = r * scale();
    const int64_t raw = static_cast<int64_t>(std::llround(scaled));
    return ring.from_signed(raw);
  }

  double decode(Ring v) const {
    return static_cast<double>(ring.to_signed(v)) / scale();
  }
};

// Row-major matrix of ring elements.
struct RingMatrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<Ring> v;

  RingMatrix() = default;
  RingMatrix(size_t r, size_t c) : rows(r), cols(c), v(r * c, 0) {}

  Ring& at(size_t r, size_t c) { return v[r * cols + c]; }
  Ring at(size_t r, size_t c) const { return v[r * cols + c]; }
  size_t size() const { return v.size(); }
  bool same_shape(const RingMatrix& o) const { return rows == o.rows && cols == o.cols; }

  static RingMatrix random(size_t r, size_t c, const RingSpec& spec, Rng& rng) {
    RingMatrix m(r, c);
    for (auto& x : m.v) x = spec.random(rng);
    return m;
  }
};

}  // namespace smpc
