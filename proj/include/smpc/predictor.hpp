#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "smpc/protocols.hpp"
#include "smpc/ring.hpp"
#include "smpc/sparse.hpp"

namespace smpc {

// Low-rank two-layer sparsity predictor: y = threshold(W2(W1 x + b1) + b2),
// bit j = 1 iff pre-threshold value j > delta (strict).
struct PredictorWeights {
  size_t h = 0;  // input width
  size_t r = 0;  // low rank
  size_t o = 0;  // predicted units (neurons or heads)
  double delta = 0.0;
  std::vector<double> w1;  // r x h, row-major
  std::vector<double> b1;  // r
  std::vector<double> w2;  // o x r, row-major
  std::vector<double> b2;  // o

  void validate() const;
};

// This party's shares of the pre-encoded predictor (transposed weight
// layouts ready for row-vector activations).
struct SharedPredictorHalf {
  RingMatrix w1t;  // h x r
  RingMatrix b1;   // 1 x r
  RingMatrix w2t;  // r x o
  RingMatrix b2;   // 1 x o
};

std::pair<SharedPredictorHalf, SharedPredictorHalf> share_predictor(const PredictorWeights& w,
                                                                    const FixedPointCodec& codec,
                                                                    Rng& rng);

// Plaintext reference running the same fixed-point pipeline as the MPC
// path (ring matmul, exact rescale, strict encoded-threshold compare), so
// the two agree bit-exactly. x: m rows of h inputs.
SparsityMask predict_plain(const PredictorWeights& w, const std::vector<double>& x, size_t m,
                           const FixedPointCodec& codec);

// Secret-shared execution: pi_matmul -> truncate -> pi_matmul -> truncate ->
// ideal compare. Returns shares of the 0-1 mask (m x o).
RingMatrix predict_mpc(ProtocolSession& s, const RingMatrix& x_share,
                       const SharedPredictorHalf& w, double delta);

// Ground truth for the FFN: bit = 1 iff the ReLU input is positive, from the
// exact fixed-point layer computation (x_enc: m x h, w_enc: h x o).
SparsityMask oracle_sparsity_ffn(const RingMatrix& x_enc, const RingMatrix& w_enc,
                                 const FixedPointCodec& codec);

// Ground truth for MHA: bit = 1 iff the L2 norm of the head's output rows is
// above delta (delta = 0 tests exact nonzero-ness on the ring values).
std::vector<uint8_t> oracle_sparsity_headnorm(const RingMatrix& head_outputs, size_t heads,
                                              size_t head_dim, double delta,
                                              const FixedPointCodec& codec);

// Standard precision/recall over bit vectors; vacuous denominators yield 1.
std::pair<double, double> precision_recall(const std::vector<uint8_t>& pred,
                                           const std::vector<uint8_t>& truth);
std::pair<double, double> precision_recall(const SparsityMask& pred, const SparsityMask& truth);

// Weights file: "h r o delta f" header line then row-major reals
// (W1, b1, W2, b2), whitespace separated.
void save_predictor(const std::string& path, const PredictorWeights& w, int f);
PredictorWeights load_predictor(const std::string& path, int expected_f);

// Synthetic predictor for a linear layer W (h x o): randomized low-rank
// factorization of W plus a bias margin calibrated by bisection until the
// predictor reaches target recall against the exact oracle on the samples.
PredictorWeights synthesize_ffn_predictor(const std::vector<double>& w_fc, size_t h, size_t o,
                                          size_t rank, const std::vector<double>& sample_x,
                                          size_t samples, double target_recall,
                                          const FixedPointCodec& codec, uint64_t seed);

// Random low-rank predictor with the output bias calibrated to hit a target
// activation rate on the samples (used where no plaintext oracle drives it).
PredictorWeights synthesize_rate_predictor(size_t h, size_t o, size_t rank,
                                           const std::vector<double>& sample_x, size_t samples,
                                           double target_rate, const FixedPointCodec& codec,
                                           uint64_t seed);

}  // namespace smpc
