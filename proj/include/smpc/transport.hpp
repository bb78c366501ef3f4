#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "smpc/ring.hpp"

namespace smpc {

// Bandwidth presets selectable from the CLI.
struct BandwidthPreset {
  std::string name;   // "100Mbps", "500Mbps", "1Gbps", "5Gbps"
  double bits_per_s;  // raw link rate
};
const std::vector<BandwidthPreset>& bandwidth_presets();
BandwidthPreset bandwidth_preset(const std::string& name);

// Per-phase, per-party counters of ring elements sent and synchronized
// rounds. Offline (dealer-to-party) traffic is tracked separately and never
// mixed into the online totals.
class CostLedger {
 public:
  struct Row {
    std::string phase;
    uint64_t sent[2] = {0, 0};
    uint64_t received[2] = {0, 0};
    uint64_t rounds = 0;
    uint64_t offline[2] = {0, 0};
  };

  void add_exchange(const std::string& phase, uint64_t sent1, uint64_t sent2);
  // Symmetric synthetic charge (ideal functionalities, counting mode).
  void add_charge(const std::string& phase, uint64_t per_party, uint64_t rounds);
  void add_offline(const std::string& phase, uint64_t per_party);

  const std::vector<Row>& rows() const { return rows_; }
  Row totals() const;  // online totals across phases
  uint64_t total_elements() const;
  uint64_t total_rounds() const;
  uint64_t total_offline() const;
  uint64_t phase_elements(const std::string& phase) const;

  // CSV with columns phase,party,elements,bytes,rounds,wall_time_s followed
  // by total rows and offline rows. Wall time = rounds*rtt + bytes/bandwidth.
  std::string to_csv(int ring_bits, double bandwidth_bits_per_s, double rtt_s) const;

  void clear();

 private:
  Row& row(const std::string& phase);
  std::vector<Row> rows_;
  std::unordered_map<std::string, size_t> index_;
};

// Deterministic simulated network between the two party threads. Both
// parties block at each exchange (lockstep rounds); the ledger is updated
// exactly once per synchronized exchange.
class TransportSim {
 public:
  TransportSim(CostLedger* ledger, uint64_t seed);

  // Each party sends its payload and receives the peer's. Mismatched phase
  // labels or meet kinds between the parties poison the transport and raise
  // DesyncError in both threads.
  std::vector<Ring> exchange(int party, const std::string& phase, std::span<const Ring> payload);

  // Same rendezvous, but payloads go to an ideal functionality evaluated
  // once at the meet point; each party receives its slot of the result.
  // `tag` must match between the parties (artifact id / kind check).
  // `charged_per_party` elements and one round are added to the ledger.
  using IdealFn = std::function<std::pair<std::vector<Ring>, std::vector<Ring>>(
      std::span<const Ring> p1, std::span<const Ring> p2, Rng& rng)>;
  // charge_round=false with charged_per_party=0 makes the meet invisible to
  // the ledger (harness-side functionality, e.g. oracle mask derivation).
  std::vector<Ring> ideal_exchange(int party, const std::string& phase,
                                   std::span<const Ring> payload, uint64_t tag,
                                   const IdealFn& fn, uint64_t charged_per_party,
                                   bool charge_round = true);

  // Reveal-to-user rendezvous: reconstructs without charging the ledger
  // (user traffic is not inter-server communication).
  std::vector<Ring> user_reveal(int party, std::span<const Ring> payload);

  void poison(const std::string& why);
  uint64_t transcript_hash() const { return transcript_hash_; }
  uint64_t rounds_completed() const { return rounds_; }
  CostLedger* ledger() { return ledger_; }

 private:
  enum class MeetKind { exchange, ideal, user };
  std::vector<Ring> meet(int party, MeetKind kind, const std::string& phase,
                         std::span<const Ring> payload, uint64_t tag, const IdealFn* fn,
                         uint64_t charged_per_party, bool charge_round);

  CostLedger* ledger_;
  Rng ideal_rng_;

  std::mutex mu_;
  std::condition_variable cv_;
  bool poisoned_ = false;
  std::string poison_why_;
  struct Pending {
    int party;
    MeetKind kind;
    std::string phase;
    uint64_t tag;
    std::vector<Ring> payload;
    const IdealFn* fn;
  };
  std::optional<Pending> pending_;
  std::optional<std::vector<Ring>> result_[2];
  uint64_t rounds_ = 0;
  uint64_t transcript_hash_ = 0x9e3779b97f4a7c15ULL;
};

}  // namespace smpc
