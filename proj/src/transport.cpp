#include "smpc/transport.hpp"

#include <sstream>

#include "smpc/error.hpp"

namespace smpc {

const std::vector<BandwidthPreset>& bandwidth_presets() {
  static const std::vector<BandwidthPreset> presets = {
      {"100Mbps", 100e6}, {"500Mbps", 500e6}, {"1Gbps", 1e9}, {"5Gbps", 5e9}};
  return presets;
}

BandwidthPreset bandwidth_preset(const std::string& name) {
  for (const auto& p : bandwidth_presets())
    if (p.name == name) return p;
  throw ConfigError("unknown bandwidth preset: " + name);
}

CostLedger::Row& CostLedger::row(const std::string& phase) {
  auto it = index_.find(phase);
  if (it != index_.end()) return rows_[it->second];
  index_.emplace(phase, rows_.size());
  rows_.push_back(Row{phase, {0, 0}, {0, 0}, 0, {0, 0}});
  return rows_.back();
}

void CostLedger::add_exchange(const std::string& phase, uint64_t sent1, uint64_t sent2) {
  Row& r = row(phase);
  r.sent[0] += sent1;
  r.sent[1] += sent2;
  r.received[0] += sent2;
  r.received[1] += sent1;
  r.rounds += 1;
}

void CostLedger::add_charge(const std::string& phase, uint64_t per_party, uint64_t rounds) {
  Row& r = row(phase);
  r.sent[0] += per_party;
  r.sent[1] += per_party;
  r.received[0] += per_party;
  r.received[1] += per_party;
  r.rounds += rounds;
}

void CostLedger::add_offline(const std::string& phase, uint64_t per_party) {
  Row& r = row(phase);
  r.offline[0] += per_party;
  r.offline[1] += per_party;
}

CostLedger::Row CostLedger::totals() const {
  Row t;
  t.phase = "total";
  for (const auto& r : rows_) {
    t.sent[0] += r.sent[0];
    t.sent[1] += r.sent[1];
    t.received[0] += r.received[0];
    t.received[1] += r.received[1];
    t.rounds += r.rounds;
    t.offline[0] += r.offline[0];
    t.offline[1] += r.offline[1];
  }
  return t;
}

uint64_t CostLedger::total_elements() const {
  Row t = totals();
  return t.sent[0] + t.sent[1];
}

uint64_t CostLedger::total_rounds() const { return totals().rounds; }

uint64_t CostLedger::total_offline() const {
  Row t = totals();
  return t.offline[0] + t.offline[1];
}

uint64_t CostLedger::phase_elements(const std::string& phase) const {
  auto it = index_.find(phase);
  if (it == index_.end()) return 0;
  const Row& r = rows_[it->second];
  return r.sent[0] + r.sent[1];
}

std::string CostLedger::to_csv(int ring_bits, double bandwidth_bits_per_s, double rtt_s) const {
  std::ostringstream os;
  os << "phase,party,elements,bytes,rounds,wall_time_s\n";
  auto emit = [&](const std::string& phase, int party, uint64_t elems, uint64_t rounds) {
    const double bytes = static_cast<double>(elems) * ring_bits / 8.0;
    const double wall = rounds * rtt_s + bytes * 8.0 / bandwidth_bits_per_s;
    os << phase << "," << party << "," << elems << "," << static_cast<uint64_t>(bytes) << ","
       << rounds << "," << wall << "\n";
  };
  for (const auto& r : rows_) {
    if (r.sent[0] + r.sent[1] + r.rounds == 0) continue;  // pure offline row
    emit(r.phase, 1, r.sent[0], r.rounds);
    emit(r.phase, 2, r.sent[1], r.rounds);
  }
  const Row t = totals();
  emit("total", 1, t.sent[0], t.rounds);
  emit("total", 2, t.sent[1], t.rounds);
  if (t.offline[0] + t.offline[1] > 0) {
    emit("offline", 1, t.offline[0], 0);
    emit("offline", 2, t.offline[1], 0);
  }
  return os.str();
}

void CostLedger::clear() {
  rows_.clear();
  index_.clear();
}

TransportSim::TransportSim(CostLedger* ledger, uint64_t seed)
    : ledger_(ledger), ideal_rng_(seed, 0x1dea1ULL) {}

void TransportSim::poison(const std::string& why) {
  std::lock_guard<std::mutex> lk(mu_);
  if (!poisoned_) {
    poisoned_ = true;
    poison_why_ = why;
  }
  cv_.notify_all();
}

std::vector<Ring> TransportSim::exchange(int party, const std::string& phase,
                                         std::span<const Ring> payload) {
  return meet(party, MeetKind::exchange, phase, payload, 0, nullptr, 0, true);
}

std::vector<Ring> TransportSim::ideal_exchange(int party, const std::string& phase,
                                               std::span<const Ring> payload, uint64_t tag,
                                               const IdealFn& fn, uint64_t charged_per_party,
                                               bool charge_round) {
  return meet(party, MeetKind::ideal, phase, payload, tag, &fn, charged_per_party, charge_round);
}

std::vector<Ring> TransportSim::user_reveal(int party, std::span<const Ring> payload) {
  return meet(party, MeetKind::user, "user", payload, 0, nullptr, 0, false);
}

std::vector<Ring> TransportSim::meet(int party, MeetKind kind, const std::string& phase,
                                     std::span<const Ring> payload, uint64_t tag,
                                     const IdealFn* fn, uint64_t charged_per_party,
                                     bool charge_round) {
  if (party != 1 && party != 2) throw ContractError("party id must be 1 or 2");
  const int slot = party - 1;
  std::unique_lock<std::mutex> lk(mu_);
  if (poisoned_) throw DesyncError("transport poisoned: " + poison_why_);

  if (!pending_.has_value()) {
    pending_ = Pending{party, kind, phase, tag, std::vector<Ring>(payload.begin(), payload.end()), fn};
    cv_.wait(lk, [&] { return poisoned_ || result_[slot].has_value(); });
    if (poisoned_ && !result_[slot].has_value())
      throw DesyncError("transport poisoned: " + poison_why_);
    std::vector<Ring> out = std::move(*result_[slot]);
    result_[slot].reset();
    return out;
  }

  // Second arriver completes the round.
  Pending first = std::move(*pending_);
  pending_.reset();
  if (first.party == party) {
    poisoned_ = true;
    poison_why_ = "same party met itself (protocol bug)";
    cv_.notify_all();
    throw DesyncError("transport poisoned: " + poison_why_);
  }
  if (first.kind != kind || first.phase != phase || first.tag != tag) {
    poisoned_ = true;
    poison_why_ = "parties desynchronized (phase '" + first.phase + "' vs '" + phase + "')";
    cv_.notify_all();
    throw DesyncError("transport poisoned: " + poison_why_);
  }

  std::span<const Ring> p1 = (first.party == 1) ? std::span<const Ring>(first.payload)
                                                : payload;
  std::span<const Ring> p2 = (first.party == 1) ? payload
                                                : std::span<const Ring>(first.payload);

  // Transcript folds both payloads in party order.
  uint64_t h = transcript_hash_;
  for (char c : phase) h = mix_keys(h, static_cast<uint64_t>(c));
  for (Ring v : p1) h = mix_keys(h, v);
  for (Ring v : p2) h = mix_keys(h, v);
  transcript_hash_ = h;

  std::vector<Ring> out1, out2;
  switch (kind) {
    case MeetKind::exchange:
      out1.assign(p2.begin(), p2.end());
      out2.assign(p1.begin(), p1.end());
      if (ledger_) ledger_->add_exchange(phase, p1.size(), p2.size());
      rounds_ += 1;
      break;
    case MeetKind::ideal: {
      auto res = (*fn)(p1, p2, ideal_rng_);
      out1 = std::move(res.first);
      out2 = std::move(res.second);
      if (charge_round || charged_per_party > 0) {
        if (ledger_) ledger_->add_charge(phase, charged_per_party, charge_round ? 1 : 0);
        if (charge_round) rounds_ += 1;
      }
      break;
    }
    case MeetKind::user: {
      out1.assign(p2.begin(), p2.end());
      out2.assign(p1.begin(), p1.end());
      break;
    }
  }

  std::vector<Ring>& first_out = (first.party == 1) ? out1 : out2;
  std::vector<Ring>& my_out = (party == 1) ? out1 : out2;
  result_[first.party - 1] = std::move(first_out);
  std::vector<Ring> mine = std::move(my_out);
  cv_.notify_all();
  return mine;
}

}  // namespace smpc
