#pragma once

#include <cstdint>

namespace smpc {

// splitmix64: tiny keyed PRNG used for all dealer/test randomness.
// Counter-keyed derivation makes dealt material independent of request
// interleaving between the two party threads.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t mix_keys(uint64_t a, uint64_t b) {
  uint64_t s = a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2));
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}
  Rng(uint64_t seed, uint64_t stream) : state_(mix_keys(seed, stream)) {}

  uint64_t next() { return splitmix64(state_); }

  // Uniform in [0, bound), bound > 0. Rejection-free modulo is fine here:
  // bounds are tiny relative to 2^64 everywhere this is used.
  uint64_t next_below(uint64_t bound) { return next() % bound; }

  // Uniform double in [0, 1).
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  uint64_t state_;
};

}  // namespace smpc
