#include "smpc/kernels.hpp"

#include <cstdint>

#include "smpc/error.hpp"

namespace smpc::kernels {

RingMatrix matmul(const RingMatrix& a, const RingMatrix& b, const RingSpec& spec) {
  if (a.cols != b.rows) throw ContractError("matmul: inner dimensions mismatch");
  RingMatrix c(a.rows, b.cols);
  const int64_t m = static_cast<int64_t>(a.rows);
  const size_t n = a.cols, p = b.cols;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const Ring* arow = &a.v[static_cast<size_t>(i) * n];
    Ring* crow = &c.v[static_cast<size_t>(i) * p];
    for (size_t k = 0; k < n; ++k) {
      const Ring aik = arow[k];
      if (aik == 0) continue;
      const Ring* brow = &b.v[k * p];
      for (size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
    for (size_t j = 0; j < p; ++j) crow[j] &= spec.mask;
  }
  return c;
}

RingMatrix matmul_serial(const RingMatrix& a, const RingMatrix& b, const RingSpec& spec) {
  if (a.cols != b.rows) throw ContractError("matmul: inner dimensions mismatch");
  RingMatrix c(a.rows, b.cols);
  for (size_t i = 0; i < a.rows; ++i)
    for (size_t j = 0; j < b.cols; ++j) {
      uint64_t acc = 0;
      for (size_t k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc & spec.mask;
    }
  return c;
}

RingMatrix add(const RingMatrix& a, const RingMatrix& b, const RingSpec& spec) {
  if (!a.same_shape(b)) throw ContractError("add: shape mismatch");
  RingMatrix c(a.rows, a.cols);
  const int64_t n = static_cast<int64_t>(a.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) c.v[i] = (a.v[i] + b.v[i]) & spec.mask;
  return c;
}

RingMatrix add_serial(const RingMatrix& a, const RingMatrix& b, const RingSpec& spec) {
  if (!a.same_shape(b)) throw ContractError("add: shape mismatch");
  RingMatrix c(a.rows, a.cols);
  for (size_t i = 0; i < a.size(); ++i) c.v[i] = (a.v[i] + b.v[i]) & spec.mask;
  return c;
}

RingMatrix sub(const RingMatrix& a, const RingMatrix& b, const RingSpec& spec) {
  if (!a.same_shape(b)) throw ContractError("sub: shape mismatch");
  RingMatrix c(a.rows, a.cols);
  const int64_t n = static_cast<int64_t>(a.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) c.v[i] = (a.v[i] - b.v[i]) & spec.mask;
  return c;
}

RingMatrix scale(const RingMatrix& a, Ring s, const RingSpec& spec) {
  RingMatrix c(a.rows, a.cols);
  const int64_t n = static_cast<int64_t>(a.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) c.v[i] = (a.v[i] * s) & spec.mask;
  return c;
}

std::vector<Ring> apply_perm(std::span<const size_t> perm, std::span<const Ring> x) {
  if (perm.size() != x.size()) throw ContractError("apply_perm: length mismatch");
  std::vector<Ring> out(x.size());
  const int64_t n = static_cast<int64_t>(x.size());
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < n; ++j) out[j] = x[perm[j]];
  return out;
}

std::vector<Ring> apply_perm_serial(std::span<const size_t> perm, std::span<const Ring> x) {
  if (perm.size() != x.size()) throw ContractError("apply_perm: length mismatch");
  std::vector<Ring> out(x.size());
  for (size_t j = 0; j < x.size(); ++j) out[j] = x[perm[j]];
  return out;
}

RingMatrix apply_perm_rows(std::span<const size_t> perm, const RingMatrix& m) {
  if (perm.size() != m.cols) throw ContractError("apply_perm_rows: length mismatch");
  RingMatrix out(m.rows, m.cols);
  const int64_t r = static_cast<int64_t>(m.rows);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < r; ++i)
    for (size_t j = 0; j < m.cols; ++j)
      out.v[static_cast<size_t>(i) * m.cols + j] = m.v[static_cast<size_t>(i) * m.cols + perm[j]];
  return out;
}

RingMatrix arith_shift(const RingMatrix& a, int f, const RingSpec& spec) {
  RingMatrix c(a.rows, a.cols);
  const int64_t n = static_cast<int64_t>(a.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) c.v[i] = spec.arith_shift(a.v[i], f);
  return c;
}

std::vector<size_t> invert_perm(std::span<const size_t> perm) {
  std::vector<size_t> inv(perm.size());
  for (size_t j = 0; j < perm.size(); ++j) inv[perm[j]] = j;
  return inv;
}

std::vector<size_t> compose_perm(std::span<const size_t> rho, std::span<const size_t> tau) {
  if (rho.size() != tau.size()) throw ContractError("compose_perm: length mismatch");
  std::vector<size_t> out(rho.size());
  for (size_t j = 0; j < rho.size(); ++j) out[j] = tau[rho[j]];
  return out;
}

RingMatrix gather_rows(const RingMatrix& m, std::span<const size_t> rows) {
  RingMatrix out(rows.size(), m.cols);
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < m.cols; ++j) out.at(i, j) = m.at(rows[i], j);
  return out;
}

RingMatrix gather_cols(const RingMatrix& m, std::span<const size_t> cols) {
  RingMatrix out(m.rows, cols.size());
  for (size_t i = 0; i < m.rows; ++i)
    for (size_t j = 0; j < cols.size(); ++j) out.at(i, j) = m.at(i, cols[j]);
  return out;
}

}  // namespace smpc::kernels
