#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "smpc/dealer.hpp"
#include "smpc/error.hpp"
#include "smpc/ring.hpp"
#include "smpc/transport.hpp"

namespace smpc {

// Charged elements for the dealer-assisted ideal functionalities that stand
// in for the framework's non-linear protocols. `compare_per_element` is the
// paper-style comparison cost C.
struct IdealCostModel {
  uint64_t compare_per_element = 64;
  uint64_t relu_per_element = 64;
  uint64_t softmax_per_row = 2048;
  uint64_t layernorm_per_element = 8;

  static IdealCostModel from_file(const std::string& path);
  void to_file(const std::string& path) const;
};

struct ProtocolStats {
  uint64_t matmul_calls = 0;
  uint64_t dot_products = 0;   // output cells computed across pi_matmul calls
  uint64_t scalar_mults = 0;   // a*n*b per pi_matmul call (original-op count)
  std::map<size_t, uint64_t> y_row_masked;  // per-row mask count in pi_simm
  void reset() { *this = ProtocolStats{}; }
};

// Tracks consumed artifact ids per party; a second consumption of the same
// id is a freshness violation.
class FreshnessRegistry {
 public:
  void consume(int party, uint64_t id);
  bool seen(int party, uint64_t id) const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::unordered_set<uint64_t> used_[2];
};

// One party's handle on a protocol run: transport endpoint, dealer material
// source, codec, and the ledger phase label for everything it sends.
struct ProtocolSession {
  int party = 1;
  FixedPointCodec codec;
  TransportSim* net = nullptr;
  Dealer* dealer = nullptr;
  FreshnessRegistry* fresh = nullptr;
  IdealCostModel costs;
  std::string phase = "Others";
  bool local_truncation = false;
  ProtocolStats stats;

  const RingSpec& ring() const { return codec.ring; }
};

// Two-party lockstep harness: runs the same per-party closure on two threads
// against one simulated transport and dealer.
class Duo {
 public:
  struct Options {
    uint64_t seed = 1;
    FixedPointCodec codec;
    IdealCostModel costs;
    bool local_truncation = false;
  };

  explicit Duo(const Options& opt)
      : ledger_(),
        net_(&ledger_, opt.seed),
        dealer_(opt.seed, opt.codec.ring),
        sessions_{ProtocolSession{1, opt.codec, &net_, &dealer_, &fresh_, opt.costs, "Others",
                                  opt.local_truncation, {}},
                  ProtocolSession{2, opt.codec, &net_, &dealer_, &fresh_, opt.costs, "Others",
                                  opt.local_truncation, {}}} {
    dealer_.attach_ledger(&ledger_);
  }

  template <typename F>
  void run(F&& f) {
    std::exception_ptr errs[2];
    auto worker = [&](int idx) {
      try {
        f(sessions_[idx]);
      } catch (...) {
        errs[idx] = std::current_exception();
        record_error(std::current_exception());
        net_.poison("peer raised an error");
      }
    };
    std::thread t1(worker, 0), t2(worker, 1);
    t1.join();
    t2.join();
    std::exception_ptr first;
    {
      std::lock_guard<std::mutex> lk(err_mu_);
      first = first_error_;
      first_error_ = nullptr;
    }
    if (first) std::rethrow_exception(first);
    if (errs[0]) std::rethrow_exception(errs[0]);
    if (errs[1]) std::rethrow_exception(errs[1]);
  }

  CostLedger& ledger() { return ledger_; }
  TransportSim& net() { return net_; }
  Dealer& dealer() { return dealer_; }
  FreshnessRegistry& fresh() { return fresh_; }
  ProtocolSession& session(int party) { return sessions_[party - 1]; }

 private:
  void record_error(std::exception_ptr e) {
    std::lock_guard<std::mutex> lk(err_mu_);
    if (!first_error_) first_error_ = e;
  }

  CostLedger ledger_;
  TransportSim net_;
  Dealer dealer_;
  FreshnessRegistry fresh_;
  ProtocolSession sessions_[2];
  std::mutex err_mu_;
  std::exception_ptr first_error_;
};

// ---- Core secure operations (called symmetrically by both parties) ----

// z = a*x + b*y + c for public ring scalars a, b, c. Zero communication;
// the public constant lands on party 2 ((i-1)*c rule).
RingMatrix pi_linear(ProtocolSession& s, Ring a, const RingMatrix& x, Ring b, const RingMatrix& y,
                     Ring c);

// Share of X*Y via one Beaver matrix triple. One round, a*n + n*b elements
// per party. Ring-exact; fixed-point callers follow with truncate().
RingMatrix pi_matmul(ProtocolSession& s, const RingMatrix& x, const RingMatrix& y);
RingMatrix pi_matmul_with(ProtocolSession& s, const RingMatrix& x, const RingMatrix& y,
                          const BeaverHalf& triple);

// Elementwise product of two shared vectors (one elementwise triple).
std::vector<Ring> pi_mul_elementwise(ProtocolSession& s, std::span<const Ring> x,
                                     std::span<const Ring> y);

// Fixed-point rescale by f bits after a multiplication. Pair method (exact,
// one round, one element per value) or local method (zero communication,
// <= 1 ulp error) per session flag.
RingMatrix truncate(ProtocolSession& s, const RingMatrix& z, int f);

// Oblivious shuffle of the columns of each row by the correlation's hidden
// permutation. One round, rows*n elements per party; consumes one fresh
// mask set.
RingMatrix pi_shuffle(ProtocolSession& s, const RingMatrix& x, const ShuffleCorrHalf& corr);
std::vector<Ring> pi_shuffle(ProtocolSession& s, std::span<const Ring> x,
                             const ShuffleCorrHalf& corr);
RingMatrix pi_shuffle_with_masks(ProtocolSession& s, const RingMatrix& x,
                                 const ShuffleCorrHalf& corr, const ShuffleMaskHalf& masks);

// Inverse shuffle using locally inverted sub-permutations and fresh masks.
RingMatrix pi_unshuffle(ProtocolSession& s, const RingMatrix& z, const ShuffleCorrHalf& corr);
std::vector<Ring> pi_unshuffle(ProtocolSession& s, std::span<const Ring> z,
                               const ShuffleCorrHalf& corr);

// Both parties learn the plaintext. One round, size elements per party.
std::vector<Ring> reveal(ProtocolSession& s, std::span<const Ring> x);
RingMatrix reveal_matrix(ProtocolSession& s, const RingMatrix& x);

// Dealer-assisted ideal functionalities with charged cost.
enum class NonlinKind { compare_gt, relu, softmax_rows, layernorm_rows };

struct NonlinParams {
  double delta = 0.0;        // compare threshold
  double prescale = 1.0;     // softmax input scale (e.g. 1/sqrt(d))
  std::vector<size_t> row_lengths;  // softmax: per-row prefix length (0 = full)
};

RingMatrix ideal_nonlinear(ProtocolSession& s, const RingMatrix& v, NonlinKind kind,
                           const NonlinParams& params = {});

uint64_t ideal_charge(const IdealCostModel& costs, NonlinKind kind, size_t rows, size_t elems);

}  // namespace smpc
