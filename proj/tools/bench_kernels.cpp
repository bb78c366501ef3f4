// Benchmark: OpenMP kernels vs the serial references kept for testing.
#include <chrono>
#include <functional>
#include <vector>
#include <cstdio>

#include "smpc/kernels.hpp"

using namespace smpc;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warmup
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main() {
  const RingSpec spec = RingSpec::with_bits(64);
  Rng rng(7);

  std::printf("%-28s %10s %10s %8s\n", "kernel", "serial_ms", "omp_ms", "speedup");
  for (size_t n : {128, 256, 512}) {
    RingMatrix a = RingMatrix::random(n, n, spec, rng);
    RingMatrix b = RingMatrix::random(n, n, spec, rng);
    const int reps = n <= 256 ? 10 : 3;
    const double ts = time_ms([&] { kernels::matmul_serial(a, b, spec); }, reps);
    const double tp = time_ms([&] { kernels::matmul(a, b, spec); }, reps);
    RingMatrix cs = kernels::matmul_serial(a, b, spec);
    RingMatrix cp = kernels::matmul(a, b, spec);
    if (cs.v != cp.v) {
      std::printf("matmul %zu: MISMATCH between serial and parallel\n", n);
      return 1;
    }
    std::printf("matmul %4zux%-4zu             %10.3f %10.3f %7.2fx\n", n, n, ts, tp, ts / tp);
  }

  for (size_t n : {1u << 16, 1u << 18}) {
    std::vector<Ring> x(n);
    for (auto& v : x) v = rng.next();
    std::vector<size_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = (i * 48271 + 11) % n;  // fixed scramble
    const double ts = time_ms([&] { kernels::apply_perm_serial(perm, x); }, 20);
    const double tp = time_ms([&] { kernels::apply_perm(perm, x); }, 20);
    if (kernels::apply_perm_serial(perm, x) != kernels::apply_perm(perm, x)) {
      std::printf("apply_perm %zu: MISMATCH\n", n);
      return 1;
    }
    std::printf("apply_perm n=%-10zu       %10.3f %10.3f %7.2fx\n", n, ts, tp, ts / tp);
  }
  return 0;
}
