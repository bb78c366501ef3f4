#include "smpc/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "smpc/kernels.hpp"

namespace smpc {

size_t SparsityMask::nnz() const {
  size_t c = 0;
  for (uint8_t b : bits) c += b;
  return c;
}

std::string SparsityMask::to_text() const {
  std::ostringstream os;
  for (size_t r = 0; r < rows; ++r) {
    for (size_t c = 0; c < cols; ++c) os << static_cast<int>(at(r, c));
    os << "\n";
  }
  return os.str();
}

SparsityMask SparsityMask::from_text(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) lines.push_back(line);
  if (lines.empty()) throw ConfigError("mask text is empty");
  SparsityMask m(lines.size(), lines[0].size());
  for (size_t r = 0; r < m.rows; ++r) {
    if (lines[r].size() != m.cols) throw ConfigError("mask text has ragged rows");
    for (size_t c = 0; c < m.cols; ++c) {
      const char ch = lines[r][c];
      if (ch != '0' && ch != '1') throw ConfigError("mask text must be 0/1");
      m.set(r, c, ch == '1');
    }
  }
  return m;
}

BipartitePartition partition_components(const SparsityMask& mask) {
  // Adjacency lists over touched nodes only.
  std::vector<std::vector<size_t>> row_adj(mask.rows), col_adj(mask.cols);
  for (size_t r = 0; r < mask.rows; ++r)
    for (size_t c = 0; c < mask.cols; ++c)
      if (mask.at(r, c)) {
        row_adj[r].push_back(c);
        col_adj[c].push_back(r);
      }

  BipartitePartition part;
  std::vector<uint8_t> row_seen(mask.rows, 0), col_seen(mask.cols, 0);
  for (size_t start = 0; start < mask.rows; ++start) {
    if (row_seen[start] || row_adj[start].empty()) continue;
    BipartiteComponent comp;
    // Iterative DFS; nodes encoded as (is_col, index).
    std::vector<std::pair<bool, size_t>> stack{{false, start}};
    row_seen[start] = 1;
    while (!stack.empty()) {
      auto [is_col, idx] = stack.back();
      stack.pop_back();
      if (!is_col) {
        comp.rows.push_back(idx);
        for (size_t c : row_adj[idx])
          if (!col_seen[c]) {
            col_seen[c] = 1;
            stack.push_back({true, c});
          }
      } else {
        comp.cols.push_back(idx);
        for (size_t r : col_adj[idx])
          if (!row_seen[r]) {
            row_seen[r] = 1;
            stack.push_back({false, r});
          }
      }
    }
    std::sort(comp.rows.begin(), comp.rows.end());
    std::sort(comp.cols.begin(), comp.cols.end());
    for (size_t r : comp.rows)
      for (size_t c : row_adj[r])
        comp.edges.push_back({r, c});
    std::sort(comp.edges.begin(), comp.edges.end());
    part.components.push_back(std::move(comp));
  }
  return part;
}

uint64_t somm_total_elements(const SparsityMask& zmask, size_t n) {
  BipartitePartition part = partition_components(zmask);
  uint64_t total = 0;
  for (const auto& c : part.components)
    total += 2 * static_cast<uint64_t>(n) * (c.rows.size() + c.cols.size());
  return total;
}

uint64_t gemm_total_elements(size_t m, size_t n, size_t p) {
  return 2 * (static_cast<uint64_t>(m) * n + static_cast<uint64_t>(n) * p);
}

uint64_t simm_total_elements(const SparsityMask& xmask, size_t p) {
  uint64_t nnz = 0, nonzero_cols = 0;
  for (size_t c = 0; c < xmask.cols; ++c) {
    uint64_t col_nnz = 0;
    for (size_t r = 0; r < xmask.rows; ++r) col_nnz += xmask.at(r, c);
    nnz += col_nnz;
    if (col_nnz > 0) nonzero_cols += 1;
  }
  return 2 * (nnz + nonzero_cols * static_cast<uint64_t>(p));
}

uint64_t spgemm_output_total_elements(const SparsityMask& zmask, size_t n) {
  return 4 * static_cast<uint64_t>(n) * zmask.nnz();
}

uint64_t spgemm_input_total_elements(const SparsityMask& xmask, size_t p) {
  return 2 * (1 + static_cast<uint64_t>(p)) * xmask.nnz();
}

uint64_t somm_dot_products(const SparsityMask& zmask) {
  BipartitePartition part = partition_components(zmask);
  uint64_t total = 0;
  for (const auto& c : part.components)
    total += static_cast<uint64_t>(c.rows.size()) * c.cols.size();
  return total;
}

double classical_index_cost(size_t n, size_t m, double comparison_cost) {
  if (m == 0) return 0.0;
  const double mn = static_cast<double>(m) * static_cast<double>(n);
  const double logn = std::log2(static_cast<double>(n));
  return (static_cast<double>(m) * logn + 2.0 * mn) * comparison_cost + 2.0 * mn;
}

SparsityMask reveal_shuffled_mask(ProtocolSession& s, const RingMatrix& bit_shares,
                                  const ShuffleCorrHalf& corr) {
  RingMatrix shuffled = pi_shuffle(s, bit_shares, corr);
  std::vector<Ring> plain = reveal(s, shuffled.v);
  SparsityMask mask(bit_shares.rows, bit_shares.cols);
  for (size_t i = 0; i < plain.size(); ++i) {
    if (plain[i] > 1)
      throw ContractError("reveal_shuffled_mask: reconstruction is not a 0-1 vector");
    mask.bits[i] = static_cast<uint8_t>(plain[i]);
  }
  mask.order = SparsityMask::Order::shuffled;
  mask.corr_id = corr.id;
  return mask;
}

RingMatrix shuffle_index(const RingMatrix& x_share, const OrderTag& x_tag,
                         const SparsityMask& mask) {
  if (x_tag.order != mask.order || x_tag.corr_id != mask.corr_id)
    throw ContractError("shuffle_index: order tag mismatch (would silently mis-index)");
  if (x_share.rows != mask.rows || x_share.cols != mask.cols)
    throw ContractError("shuffle_index: shape mismatch");
  // Local selection: gather mask=1 positions row-major into a 1 x nnz row.
  RingMatrix out(1, mask.nnz());
  size_t k = 0;
  for (size_t i = 0; i < mask.bits.size(); ++i)
    if (mask.bits[i]) out.v[k++] = x_share.v[i];
  return out;
}

RingMatrix pi_somm(ProtocolSession& s, const RingMatrix& x, const RingMatrix& y,
                   const SparsityMask& zmask) {
  if (x.rows != zmask.rows || y.cols != zmask.cols)
    throw ContractError("pi_somm: mask shape mismatch");
  if (x.cols != y.rows) throw ContractError("pi_somm: inner dimensions mismatch");
  RingMatrix z(zmask.rows, zmask.cols);  // mask=0 cells stay literal zero
  BipartitePartition part = partition_components(zmask);
  for (const auto& comp : part.components) {
    RingMatrix xs = kernels::gather_rows(x, comp.rows);
    RingMatrix ys = kernels::gather_cols(y, comp.cols);
    RingMatrix block = pi_matmul(s, xs, ys);
    for (size_t i = 0; i < comp.rows.size(); ++i)
      for (size_t j = 0; j < comp.cols.size(); ++j)
        if (zmask.at(comp.rows[i], comp.cols[j]))
          z.at(comp.rows[i], comp.cols[j]) = block.at(i, j);
  }
  return z;
}

RingMatrix pi_simm(ProtocolSession& s, const RingMatrix& x, const RingMatrix& y,
                   const SparsityMask& xmask) {
  if (x.rows != xmask.rows || x.cols != xmask.cols)
    throw ContractError("pi_simm: mask shape mismatch");
  if (x.cols != y.rows) throw ContractError("pi_simm: inner dimensions mismatch");
  const RingSpec& spec = s.ring();
  RingMatrix z(x.rows, y.cols);
  for (size_t j = 0; j < xmask.cols; ++j) {
    std::vector<size_t> rows;
    for (size_t r = 0; r < xmask.rows; ++r)
      if (xmask.at(r, j)) rows.push_back(r);
    if (rows.empty()) continue;
    RingMatrix sub(rows.size(), 1);
    for (size_t i = 0; i < rows.size(); ++i) sub.at(i, 0) = x.at(rows[i], j);
    RingMatrix yrow(1, y.cols);
    for (size_t c = 0; c < y.cols; ++c) yrow.at(0, c) = y.at(j, c);
    s.stats.y_row_masked[j] += 1;
    RingMatrix block = pi_matmul(s, sub, yrow);
    // Merge&Sum: partial results of the same output row accumulate.
    for (size_t i = 0; i < rows.size(); ++i)
      for (size_t c = 0; c < y.cols; ++c)
        z.at(rows[i], c) = spec.add(z.at(rows[i], c), block.at(i, c));
  }
  return z;
}

RingMatrix pi_spgemm_output(ProtocolSession& s, const RingMatrix& x, const RingMatrix& y,
                            const SparsityMask& zmask) {
  if (x.rows != zmask.rows || y.cols != zmask.cols)
    throw ContractError("pi_spgemm_output: mask shape mismatch");
  if (x.cols != y.rows) throw ContractError("pi_spgemm_output: inner dimensions mismatch");
  RingMatrix z(zmask.rows, zmask.cols);
  std::vector<size_t> one_row(1);
  for (size_t r = 0; r < zmask.rows; ++r)
    for (size_t c = 0; c < zmask.cols; ++c) {
      if (!zmask.at(r, c)) continue;
      one_row[0] = r;
      RingMatrix xi = kernels::gather_rows(x, one_row);
      RingMatrix yj(x.cols, 1);
      for (size_t k = 0; k < x.cols; ++k) yj.at(k, 0) = y.at(k, c);
      RingMatrix dot = pi_matmul(s, xi, yj);
      z.at(r, c) = dot.at(0, 0);
    }
  return z;
}

RingMatrix pi_spgemm_input(ProtocolSession& s, const RingMatrix& x, const RingMatrix& y,
                           const SparsityMask& xmask) {
  if (x.rows != xmask.rows || x.cols != xmask.cols)
    throw ContractError("pi_spgemm_input: mask shape mismatch");
  if (x.cols != y.rows) throw ContractError("pi_spgemm_input: inner dimensions mismatch");
  const RingSpec& spec = s.ring();
  RingMatrix z(x.rows, y.cols);
  for (size_t r = 0; r < xmask.rows; ++r)
    for (size_t j = 0; j < xmask.cols; ++j) {
      if (!xmask.at(r, j)) continue;
      RingMatrix scalar(1, 1);
      scalar.at(0, 0) = x.at(r, j);
      RingMatrix yrow(1, y.cols);
      for (size_t c = 0; c < y.cols; ++c) yrow.at(0, c) = y.at(j, c);
      RingMatrix part = pi_matmul(s, scalar, yrow);
      for (size_t c = 0; c < y.cols; ++c) z.at(r, c) = spec.add(z.at(r, c), part.at(0, c));
    }
  return z;
}

RingMatrix apply_dp_perturbation(ProtocolSession& s, const RingMatrix& bit_shares, double eps) {
  if (!(eps > 0)) throw ContractError("apply_dp_perturbation: eps must be positive");
  if (std::isinf(eps)) return bit_shares;  // DP off
  DpFlipHalf flip = s.dealer->take_dp_flip(s.party, bit_shares.size(), eps, s.phase);
  s.fresh->consume(s.party, flip.id);
  // s OR p = s + p - s*p, exact on 0-1 ring values.
  std::vector<Ring> prod = pi_mul_elementwise(s, bit_shares.v, flip.p);
  const RingSpec& spec = s.ring();
  RingMatrix out(bit_shares.rows, bit_shares.cols);
  for (size_t i = 0; i < out.size(); ++i)
    out.v[i] = spec.sub(spec.add(bit_shares.v[i], flip.p[i]), prod[i]);
  return out;
}

}  // namespace smpc
