#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "smpc/kv_cache.hpp"
#include "smpc/predictor.hpp"
#include "smpc/protocols.hpp"
#include "smpc/ring.hpp"
#include "smpc/sparse.hpp"

namespace smpc {

struct ModelConfig {
  size_t hidden = 256;
  size_t heads = 8;
  size_t head_dim = 32;
  size_t ffn = 1024;
  size_t layers = 2;
  bool use_ffn = true;  // false = attention-only stack (cache studies)
  double delta_oracle = 0.0;
  size_t predictor_rank = 32;
  double predictor_delta = 0.0;
  double predictor_target_recall = 0.95;

  void validate() const;
};

enum class Backend { dense, spgemm, sparse };
enum class SparsitySource { oracle, predictor, synthetic, trace };
enum class SynthStructure { column, elementwise, head };
enum class CacheStrategy { pr, mr, mr_prefetch };

struct RunMode {
  Backend backend = Backend::sparse;
  SparsitySource source = SparsitySource::oracle;
  SynthStructure structure = SynthStructure::column;
  double ffn_sparsity = 0.9;  // fraction of zero neurons
  double mha_sparsity = 0.5;  // fraction of inactive heads
  CacheStrategy cache = CacheStrategy::mr_prefetch;
  double dp_eps = std::numeric_limits<double>::infinity();
  bool exec = true;  // false = counting-only (ledger computed, protocols skipped)
  bool charge_predictor = true;
  bool local_truncation = false;
  double dp_flip_gain = 8.11;
  uint64_t policy_w = 0;  // 0 = derive from model
  uint64_t policy_x = 0;
  bool policy_w_joint = true;  // w counts K and V projections jointly
};

// Head-activation trace (steps x heads) used by SparsitySource::trace.
struct HeadTrace {
  size_t heads = 0;
  std::vector<std::vector<uint8_t>> steps;

  static HeadTrace iid(size_t heads, size_t steps, double rate, uint64_t seed);
  // Per-head periodic on/off runs: spans[h] = {on_len, off_len, offset}.
  struct Phase {
    size_t on = 1, off = 1, offset = 0;
  };
  static HeadTrace phased(size_t heads, size_t steps, const std::vector<Phase>& spans);
  double activation_rate() const;
};

struct TraceRow {
  size_t token = 0;
  uint64_t activated = 0;
  uint64_t misses = 0;
  uint64_t merged_tokens = 0;
  uint64_t prefetched = 0;
  uint64_t ledger_delta = 0;     // online elements, both parties
  uint64_t refill_elements = 0;  // cache-attributable elements, both parties
};

struct RunResult {
  std::vector<std::vector<double>> logits;  // per generated token
  std::vector<size_t> argmax;
  std::vector<TraceRow> trace;
  std::vector<CostLedger::Row> phases;
  uint64_t total_elements = 0;
  uint64_t total_rounds = 0;
  uint64_t offline_elements = 0;
  uint64_t refill_elements_total = 0;
  uint64_t transcript_hash = 0;
  double predictor_precision = 1.0;
  double predictor_recall = 1.0;
  int ring_bits = 64;

  uint64_t phase_elements(const std::string& phase) const;
  std::string trace_csv() const;
};

// Toy transformer-layer private-inference pipeline over the simulated
// two-party transport, with dense / sparse / per-nonzero baselines and a
// cache manager in front of the sparse QKV layer.
class Engine {
 public:
  Engine(const ModelConfig& cfg, const RunMode& mode, const FixedPointCodec& codec,
         const IdealCostModel& costs, uint64_t model_seed);
  ~Engine();

  void set_head_trace(const HeadTrace& trace);
  const HeadTrace* head_trace() const;

  RunResult run(size_t prompt_len, size_t gen_len);

  const ModelConfig& config() const { return cfg_; }
  const RunMode& mode() const { return mode_; }
  PrefetchPolicy policy() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ModelConfig cfg_;
  RunMode mode_;
};

}  // namespace smpc
