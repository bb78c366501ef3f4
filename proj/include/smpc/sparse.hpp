#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "smpc/dealer.hpp"
#include "smpc/protocols.hpp"
#include "smpc/ring.hpp"

namespace smpc {

// Plaintext 0-1 matrix marking predicted-nonzero positions. The order tag
// records whether the axis it indexes is in original or shuffled order; any
// matrix it indexes must be in the same permutation state.
struct SparsityMask {
  enum class Order { original, shuffled };

  size_t rows = 0;
  size_t cols = 0;
  std::vector<uint8_t> bits;
  Order order = Order::original;
  uint64_t corr_id = 0;  // correlation that produced the shuffled order

  SparsityMask() = default;
  SparsityMask(size_t r, size_t c) : rows(r), cols(c), bits(r * c, 0) {}

  uint8_t at(size_t r, size_t c) const { return bits[r * cols + c]; }
  void set(size_t r, size_t c, uint8_t v) { bits[r * cols + c] = v; }
  size_t nnz() const;
  bool same_order(const SparsityMask& o) const {
    return order == o.order && corr_id == o.corr_id;
  }

  // Row-major 0/1 text dump (one row per line), for test-fixture reuse.
  std::string to_text() const;
  static SparsityMask from_text(const std::string& text);
};

// One connected component of the bipartite graph whose edges are the mask's
// nonzeros: touched row indices, touched column indices, edges.
struct BipartiteComponent {
  std::vector<size_t> rows;
  std::vector<size_t> cols;
  std::vector<std::pair<size_t, size_t>> edges;
};

struct BipartitePartition {
  std::vector<BipartiteComponent> components;
};

// Connected components via DFS, deterministic ordering (lowest row first).
// Runs locally on both parties from the public shuffled mask.
BipartitePartition partition_components(const SparsityMask& mask);

// ---- Analytic communication-cost counting (total over both parties) ----

// Block matmul per component: sum over components of 2n(|I_x| + |I_y|).
uint64_t somm_total_elements(const SparsityMask& zmask, size_t n);
// Dense Beaver matmul: 2(mn + np).
uint64_t gemm_total_elements(size_t m, size_t n, size_t p);
// Column-by-row evaluation: 2(nnz + k*p) with k = number of nonzero columns.
uint64_t simm_total_elements(const SparsityMask& xmask, size_t p);
// Per-nonzero-output Beaver dot products with repeated masking: 4n * nnz.
uint64_t spgemm_output_total_elements(const SparsityMask& zmask, size_t n);
// Per-nonzero-input scalar-times-row products: 2(1 + p) * nnz.
uint64_t spgemm_input_total_elements(const SparsityMask& xmask, size_t p);
// Output cells computed by SOMM's block matmuls: sum |I_x| * |I_y|.
uint64_t somm_dot_products(const SparsityMask& zmask);

// Classical secure-indexing cost (m log2 n + 2mn)C + 2mn; analytical
// baseline only, never executed as a protocol.
double classical_index_cost(size_t n, size_t m, double comparison_cost);

// ---- Secure operations ----

// Shuffle the 0-1 sharing with the correlation and reveal it in shuffled
// order. The sparsity level (count of ones) is public from here on.
SparsityMask reveal_shuffled_mask(ProtocolSession& s, const RingMatrix& bit_shares,
                                  const ShuffleCorrHalf& corr);

// Local selection of the mask=1 columns of an aligned (same order tag)
// shuffled share. Zero communication.
struct OrderTag {
  SparsityMask::Order order = SparsityMask::Order::original;
  uint64_t corr_id = 0;
};
RingMatrix shuffle_index(const RingMatrix& x_share, const OrderTag& x_tag,
                         const SparsityMask& mask);

// Sparse-output matrix multiplication: one Beaver matmul per bipartite
// component of the output mask; mask=0 cells hold literal zero shares.
RingMatrix pi_somm(ProtocolSession& s, const RingMatrix& x, const RingMatrix& y,
                   const SparsityMask& zmask);

// Sparse-input matrix multiplication: gathered column sub-vectors times rows
// of Y, each needed Y row masked and communicated exactly once.
RingMatrix pi_simm(ProtocolSession& s, const RingMatrix& x, const RingMatrix& y,
                   const SparsityMask& xmask);

// Straw-man baseline: an independent Beaver dot product per nonzero output,
// re-masking rows and columns every time.
RingMatrix pi_spgemm_output(ProtocolSession& s, const RingMatrix& x, const RingMatrix& y,
                            const SparsityMask& zmask);

// Input-sparse straw-man: an independent scalar-times-row product per
// nonzero input element, re-masking the Y row every time.
RingMatrix pi_spgemm_input(ProtocolSession& s, const RingMatrix& x, const RingMatrix& y,
                           const SparsityMask& xmask);

// DP perturbation of the shared 0-1 sparsity vector before revealing:
// s' = s OR p for a dealer-dealt perturbation vector p (never flips 1 -> 0).
// eps = +infinity disables the mechanism.
RingMatrix apply_dp_perturbation(ProtocolSession& s, const RingMatrix& bit_shares, double eps);

}  // namespace smpc
