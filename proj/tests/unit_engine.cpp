#include <doctest.h>

#include <cmath>

#include "smpc/engine.hpp"

using namespace smpc;

namespace {

const FixedPointCodec kCodec(64, 16);

ModelConfig toy_model() {
  ModelConfig cfg;
  cfg.hidden = 32;
  cfg.heads = 4;
  cfg.head_dim = 8;
  cfg.ffn = 64;
  cfg.layers = 1;
  cfg.predictor_rank = 8;
  return cfg;
}

IdealCostModel cheap_costs() {
  IdealCostModel c;
  c.compare_per_element = 4;
  c.relu_per_element = 4;
  c.softmax_per_row = 64;
  c.layernorm_per_element = 2;
  return c;
}

RunMode base_mode(Backend b, SparsitySource src) {
  RunMode m;
  m.backend = b;
  m.source = src;
  return m;
}

bool logits_equal(const RunResult& a, const RunResult& b) {
  if (a.logits.size() != b.logits.size()) return false;
  for (size_t i = 0; i < a.logits.size(); ++i)
    if (a.logits[i] != b.logits[i]) return false;  // bit-exact doubles
  return true;
}

}  // namespace

TEST_CASE("oracle sparse mode reproduces dense logits bit-exactly") {
  ModelConfig cfg = toy_model();
  RunMode dense = base_mode(Backend::dense, SparsitySource::oracle);
  RunMode sparse = base_mode(Backend::sparse, SparsitySource::oracle);
  Engine e1(cfg, dense, kCodec, cheap_costs(), 3);
  Engine e2(cfg, sparse, kCodec, cheap_costs(), 3);
  RunResult r1 = e1.run(4, 3);
  RunResult r2 = e2.run(4, 3);
  REQUIRE(r1.logits.size() == 3);
  CHECK(logits_equal(r1, r2));
  CHECK(r1.argmax == r2.argmax);
}

TEST_CASE("spgemm backend matches sparse backend outputs but costs more") {
  ModelConfig cfg = toy_model();
  RunMode sparse = base_mode(Backend::sparse, SparsitySource::oracle);
  RunMode spg = base_mode(Backend::spgemm, SparsitySource::oracle);
  Engine e1(cfg, sparse, kCodec, cheap_costs(), 4);
  Engine e2(cfg, spg, kCodec, cheap_costs(), 4);
  RunResult r1 = e1.run(3, 2);
  RunResult r2 = e2.run(3, 2);
  CHECK(logits_equal(r1, r2));
  CHECK(r2.total_elements > r1.total_elements);
}

TEST_CASE("synthetic column sparsity cuts the FC phases") {
  ModelConfig cfg = toy_model();
  RunMode dense = base_mode(Backend::dense, SparsitySource::synthetic);
  RunMode sparse = base_mode(Backend::sparse, SparsitySource::synthetic);
  sparse.ffn_sparsity = 0.9;
  sparse.mha_sparsity = 0.5;
  Engine e1(cfg, dense, kCodec, cheap_costs(), 5);
  Engine e2(cfg, sparse, kCodec, cheap_costs(), 5);
  RunResult r1 = e1.run(8, 2);
  RunResult r2 = e2.run(8, 2);
  CHECK(r2.phase_elements("FC1") * 3 < r1.phase_elements("FC1"));
  CHECK(r2.phase_elements("FC2") * 3 < r1.phase_elements("FC2"));
  CHECK(r2.phase_elements("Softmax") < r1.phase_elements("Softmax"));
  CHECK(r2.total_elements < r1.total_elements);
}

TEST_CASE("counting mode reproduces the executed ledger row for row") {
  ModelConfig cfg = toy_model();
  for (Backend b : {Backend::dense, Backend::sparse, Backend::spgemm}) {
    for (CacheStrategy cs : {CacheStrategy::pr, CacheStrategy::mr, CacheStrategy::mr_prefetch}) {
      RunMode exec_mode = base_mode(b, SparsitySource::trace);
      exec_mode.cache = cs;
      exec_mode.ffn_sparsity = 0.8;
      exec_mode.policy_w = 64;  // low threshold so prefetching fires
      exec_mode.policy_x = 32;
      RunMode count_mode = exec_mode;
      count_mode.exec = false;

      HeadTrace trace = HeadTrace::phased(
          cfg.heads, 40, {{2, 2, 0}, {2, 2, 2}, {6, 6, 0}, {1, 1, 1}});
      Engine e1(cfg, exec_mode, kCodec, cheap_costs(), 6);
      e1.set_head_trace(trace);
      Engine e2(cfg, count_mode, kCodec, cheap_costs(), 6);
      e2.set_head_trace(trace);
      RunResult r1 = e1.run(6, 6);
      RunResult r2 = e2.run(6, 6);
      // The executed run carries an extra dealer "offline" row; every online
      // phase must agree element for element and round for round.
      for (const auto& row : r1.phases) {
        if (row.phase == "offline") continue;
        bool found = false;
        for (const auto& other : r2.phases)
          if (other.phase == row.phase) {
            found = true;
            CHECK(row.sent[0] == other.sent[0]);
            CHECK(row.sent[1] == other.sent[1]);
            CHECK(row.rounds == other.rounds);
          }
        if (row.sent[0] + row.sent[1] + row.rounds > 0) CHECK(found);
      }
      CHECK(r1.total_elements == r2.total_elements);
      // Per-token traces agree as well.
      REQUIRE(r1.trace.size() == r2.trace.size());
      for (size_t i = 0; i < r1.trace.size(); ++i) {
        CHECK(r1.trace[i].ledger_delta == r2.trace[i].ledger_delta);
        CHECK(r1.trace[i].refill_elements == r2.trace[i].refill_elements);
        CHECK(r1.trace[i].misses == r2.trace[i].misses);
      }
    }
  }
}

TEST_CASE("cache strategies agree on logits and order by cost") {
  ModelConfig cfg = toy_model();
  cfg.use_ffn = false;  // attention-only stack isolates the cache behavior
  HeadTrace trace = HeadTrace::phased(cfg.heads, 64,
                                      {{4, 4, 0}, {4, 4, 4}, {8, 8, 0}, {16, 16, 8}});
  RunResult results[3];
  int idx = 0;
  for (CacheStrategy cs : {CacheStrategy::pr, CacheStrategy::mr, CacheStrategy::mr_prefetch}) {
    RunMode m = base_mode(Backend::sparse, SparsitySource::trace);
    m.cache = cs;
    m.policy_w = 256;  // w/x = 8 at x = 32: long runs trigger prefetch
    m.policy_x = 32;
    Engine e(cfg, m, kCodec, cheap_costs(), 7);
    e.set_head_trace(trace);
    results[idx++] = e.run(4, 40);
  }
  CHECK(logits_equal(results[0], results[1]));
  CHECK(logits_equal(results[1], results[2]));
  CHECK(results[2].total_elements <= results[1].total_elements);
  CHECK(results[1].total_elements < results[0].total_elements);
  CHECK(results[1].refill_elements_total < results[0].refill_elements_total);
  // PR's attributed refill equals its CacheRefill ledger phase exactly.
  CHECK(results[0].refill_elements_total == results[0].phase_elements("CacheRefill"));
}

TEST_CASE("gen length 0 gives a prefill-only run") {
  ModelConfig cfg = toy_model();
  RunMode m = base_mode(Backend::sparse, SparsitySource::synthetic);
  Engine e(cfg, m, kCodec, cheap_costs(), 8);
  RunResult r = e.run(5, 0);
  CHECK(r.logits.empty());
  CHECK(r.trace.empty());
  CHECK(r.total_elements > 0);
}

TEST_CASE("decode steps are cheaper than prefill for long prompts") {
  ModelConfig cfg = toy_model();
  RunMode m = base_mode(Backend::sparse, SparsitySource::synthetic);
  Engine e(cfg, m, kCodec, cheap_costs(), 9);
  RunResult prefill_only = e.run(16, 0);
  Engine e2(cfg, m, kCodec, cheap_costs(), 9);
  RunResult with_decode = e2.run(16, 2);
  const uint64_t decode_cost = with_decode.total_elements - prefill_only.total_elements;
  CHECK(decode_cost < prefill_only.total_elements);
}

TEST_CASE("predictor mode stays faithful to its own mask (bounded error contract)") {
  ModelConfig cfg = toy_model();
  RunMode m = base_mode(Backend::sparse, SparsitySource::predictor);
  m.mha_sparsity = 0.25;
  Engine e(cfg, m, kCodec, cheap_costs(), 10);
  RunResult r = e.run(4, 2);
  CHECK(r.predictor_recall > 0.9);  // synthesized to target 0.95
  CHECK(r.predictor_precision > 0.0);
  CHECK(r.phase_elements("Predictor") > 0);
  REQUIRE(r.logits.size() == 2);
  for (double v : r.logits[1]) CHECK(std::isfinite(v));
}

TEST_CASE("dp superset computation leaves oracle outputs unchanged") {
  ModelConfig cfg = toy_model();
  RunMode off = base_mode(Backend::sparse, SparsitySource::oracle);
  RunMode on = off;
  on.dp_eps = 0.05;
  Engine e1(cfg, off, kCodec, cheap_costs(), 11);
  Engine e2(cfg, on, kCodec, cheap_costs(), 11);
  RunResult r1 = e1.run(4, 3);
  RunResult r2 = e2.run(4, 3);
  CHECK(logits_equal(r1, r2));
  CHECK(r2.total_elements >= r1.total_elements);  // extra neurons computed
}

TEST_CASE("determinism: same seed gives identical runs") {
  ModelConfig cfg = toy_model();
  RunMode m = base_mode(Backend::sparse, SparsitySource::synthetic);
  Engine e1(cfg, m, kCodec, cheap_costs(), 12);
  Engine e2(cfg, m, kCodec, cheap_costs(), 12);
  RunResult r1 = e1.run(4, 3);
  RunResult r2 = e2.run(4, 3);
  CHECK(r1.transcript_hash == r2.transcript_hash);
  CHECK(r1.total_elements == r2.total_elements);
  CHECK(logits_equal(r1, r2));
  Engine e3(cfg, m, kCodec, cheap_costs(), 13);
  RunResult r3 = e3.run(4, 3);
  CHECK(r3.transcript_hash != r1.transcript_hash);
}
