#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smpc/engine.hpp"

namespace smpc {

struct TransportParams {
  std::string bandwidth = "1Gbps";
  double rtt_ms = 1.0;
};

// Fully deterministic run description parsed from a structured-text config
// (schema-versioned `key = value` lines; unknown keys are hard errors).
struct Scenario {
  int schema = 1;
  uint64_t seed = 42;
  int ring_k = 64;
  int ring_f = 16;
  ModelConfig model;
  RunMode mode;
  IdealCostModel costs;
  TransportParams transport;
  size_t prompt = 32;
  size_t generate = 8;
  std::string report_path = "report.csv";
  std::string trace_path = "trace.csv";
  std::string dealer_cache;
  std::string trace_kind;   // "", "iid", "phased2" (source = trace)
  double trace_rate = 0.5;

  static Scenario from_file(const std::string& path);
  uint64_t hash() const;  // run identity
  FixedPointCodec codec() const { return FixedPointCodec(ring_k, ring_f); }
};

struct ScenarioRun {
  Scenario scenario;
  RunResult result;
};

// Built-in mixed-period trace preset used by cache-strategy scenarios.
HeadTrace phased2_trace(size_t heads, size_t steps);

ScenarioRun run_scenario(const Scenario& sc);

std::string report_csv(const Scenario& sc, const RunResult& r);
void write_run_outputs(const ScenarioRun& run);

// Ratio table between two report files; incomparable scenarios (different
// model/ring meta) are an error.
std::string compare_reports(const std::string& path_a, const std::string& path_b);

// Sweep one axis (currently "sparsity" = FFN zero fraction); returns CSV
// with one row per value.
std::string sweep_axis(const Scenario& base, const std::string& axis, double from, double to,
                       size_t steps);

}  // namespace smpc
