#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "smpc/ring.hpp"

namespace smpc {

class CostLedger;

// Correlated-randomness kinds the dealer emulator produces.
enum class MaterialKind : uint32_t {
  beaver = 1,        // matrix triple (A, B, C = A*B)
  elem_triple = 2,   // elementwise triple (a, b, c = a .* b)
  shuffle_corr = 3,  // reusable sub-permutation pair
  shuffle_mask = 4,  // single-use mask set for one shuffle invocation
  trunc_batch = 5,   // batch of truncation pairs (r, r >> f)
  dp_flip = 6,       // shared 0-1 perturbation vector for DP
};

// Per-party halves handed to protocol code. Every artifact carries a unique
// id; protocol invocations register the id so reuse is detected.
struct BeaverHalf {
  uint64_t id = 0;
  RingMatrix a, b, c;  // this party's shares; shapes m x n, n x p, m x p
};

struct ElemTripleHalf {
  uint64_t id = 0;
  std::vector<Ring> a, b, c;
};

struct ShuffleCorrHalf {
  uint64_t id = 0;
  size_t n = 0;
  std::vector<size_t> rho, tau;
};

struct ShuffleMaskHalf {
  uint64_t id = 0;
  uint64_t corr_id = 0;
  bool inverse = false;
  RingMatrix a, b;  // rows x n masks for one matrix shuffle
};

struct TruncBatchHalf {
  uint64_t id = 0;
  int f = 0;
  std::vector<Ring> r, r_shifted;
};

struct DpFlipHalf {
  uint64_t id = 0;
  std::vector<Ring> p;  // share of the 0-1 perturbation vector
};

// In-process trusted-dealer emulator. All randomness is derived from
// (seed, kind, index), so dealt material is independent of which party
// thread's request arrives first. Party i's k-th request of a kind must
// match the peer's k-th request of that kind.
class Dealer {
 public:
  Dealer(uint64_t seed, RingSpec spec);

  void attach_ledger(CostLedger* ledger) { ledger_ = ledger; }
  // Optional finite budget per kind; exceeding it raises DealerExhaustedError.
  void set_budget(MaterialKind kind, uint64_t count);
  void set_dp_flip_gain(double gain) { dp_flip_gain_ = gain; }
  double dp_flip_gain() const { return dp_flip_gain_; }

  // Party-facing requests (thread-safe, symmetric across parties).
  BeaverHalf take_beaver(int party, size_t m, size_t n, size_t p, const std::string& phase);
  ElemTripleHalf take_elem_triple(int party, size_t n, const std::string& phase);
  ShuffleCorrHalf take_shuffle_corr(int party, size_t n, const std::string& phase);
  ShuffleMaskHalf take_shuffle_masks(int party, const ShuffleCorrHalf& corr, bool inverse,
                                     size_t rows, const std::string& phase);
  TruncBatchHalf take_trunc_batch(int party, size_t count, int f, const std::string& phase);
  DpFlipHalf take_dp_flip(int party, size_t n, double eps, const std::string& phase);

  // Harness-facing: deal for both parties at once (offline phase of tests
  // and model setup).
  std::pair<BeaverHalf, BeaverHalf> deal_beaver(size_t m, size_t n, size_t p);
  std::pair<ShuffleCorrHalf, ShuffleCorrHalf> deal_shuffle(size_t n);
  std::pair<ShuffleMaskHalf, ShuffleMaskHalf> deal_shuffle_masks(const ShuffleCorrHalf& c1,
                                                                 bool inverse, size_t rows);
  std::pair<TruncBatchHalf, TruncBatchHalf> deal_truncation(size_t count, int f);

  // Test-harness-side visibility: the hidden permutation of a dealt shuffle
  // correlation, and truncation/exact-reshare plaintext used by the ideal
  // truncation functionality.
  std::vector<size_t> peek_pi(uint64_t corr_id) const;
  // Pins the permutation used by the next shuffle_corr mint (tests only).
  void pin_next_pi(std::vector<size_t> pi);

  // Plaintext (r, output mask u) of a truncation batch; used by the exact
  // truncation functionality at protocol time.
  std::pair<const std::vector<Ring>*, const std::vector<Ring>*> trunc_plain(uint64_t id) const;

  const RingSpec& spec() const { return spec_; }

  // Dealt-material cache: versioned binary blob keyed by (scenario_hash,
  // seed). Returns false when the file is absent or keyed differently.
  void save_cache(const std::string& path, uint64_t scenario_hash) const;
  bool load_cache(const std::string& path, uint64_t scenario_hash);

  uint64_t minted_count(MaterialKind kind) const;

 private:
  struct BeaverArt {
    size_t m, n, p;
    RingMatrix a1, a2, b1, b2, c1, c2;
  };
  struct ElemTripleArt {
    size_t n;
    std::vector<Ring> a1, a2, b1, b2, c1, c2;
  };
  struct CorrArt {
    size_t n;
    std::vector<size_t> pi, tau1, tau2, rho1, rho2;
  };
  struct MaskArt {
    uint64_t corr_id;
    bool inverse;
    size_t rows, n;
    RingMatrix a1, a2, b1, b2;
  };
  struct TruncArt {
    size_t count;
    int f;
    std::vector<Ring> r, u;          // dealer-side plaintext
    std::vector<Ring> r1, r2, s1, s2;  // shares of r and of r >> f
  };
  struct DpFlipArt {
    size_t n;
    double eps;
    size_t flips;
    std::vector<Ring> p1, p2;
  };

  static uint64_t make_id(MaterialKind kind, uint64_t index) {
    return (static_cast<uint64_t>(kind) << 56) | index;
  }
  Rng rng_for(MaterialKind kind, uint64_t index) const {
    return Rng(seed_, mix_keys(static_cast<uint64_t>(kind), index));
  }
  void check_budget(MaterialKind kind, uint64_t index) const;
  uint64_t next_index(int party, MaterialKind kind);
  void charge_offline(const std::string& phase, uint64_t elems_per_party);

  const BeaverArt& beaver_at(uint64_t idx, size_t m, size_t n, size_t p);
  const ElemTripleArt& elem_at(uint64_t idx, size_t n);
  const CorrArt& corr_at(uint64_t idx, size_t n);
  const MaskArt& mask_at(uint64_t idx, uint64_t corr_id, bool inverse, size_t rows);
  const TruncArt& trunc_at(uint64_t idx, size_t count, int f);
  const DpFlipArt& dp_at(uint64_t idx, size_t n, double eps);

  uint64_t seed_;
  RingSpec spec_;
  CostLedger* ledger_ = nullptr;
  double dp_flip_gain_ = 8.11;

  mutable std::mutex mu_;
  std::unordered_map<uint32_t, uint64_t> counters_[2];  // per party, per kind
  std::unordered_map<uint32_t, uint64_t> budgets_;
  // Deques: artifact references stay valid while new material is minted.
  std::deque<BeaverArt> beavers_;
  std::deque<ElemTripleArt> elems_;
  std::deque<CorrArt> corrs_;
  std::deque<MaskArt> masks_;
  std::deque<TruncArt> truncs_;
  std::deque<DpFlipArt> dps_;
  std::deque<std::vector<size_t>> pinned_pis_;
};

// Number of 0 -> 1 flips the DP mechanism draws: |discrete Laplace(e^-eps)|
// scaled by the calibration gain and truncated to [0, n].
size_t dp_flip_count(double eps, double gain, size_t n, Rng& rng);

}  // namespace smpc
