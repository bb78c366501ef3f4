#include "smpc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace smpc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(where + ": expected true/false, got '" + v + "'");
}

double parse_eps(const std::string& v) {
  if (v == "inf" || v == "off") return std::numeric_limits<double>::infinity();
  return std::stod(v);
}

uint64_t fnv1a(uint64_t h, const std::string& s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::dense: return "dense";
    case Backend::spgemm: return "spgemm";
    case Backend::sparse: return "sparse";
  }
  return "?";
}
std::string source_name(SparsitySource s) {
  switch (s) {
    case SparsitySource::oracle: return "oracle";
    case SparsitySource::predictor: return "predictor";
    case SparsitySource::synthetic: return "synthetic";
    case SparsitySource::trace: return "trace";
  }
  return "?";
}
std::string structure_name(SynthStructure s) {
  switch (s) {
    case SynthStructure::column: return "column";
    case SynthStructure::elementwise: return "elementwise";
    case SynthStructure::head: return "head";
  }
  return "?";
}
std::string cache_name(CacheStrategy c) {
  switch (c) {
    case CacheStrategy::pr: return "pr";
    case CacheStrategy::mr: return "mr";
    case CacheStrategy::mr_prefetch: return "mr_prefetch";
  }
  return "?";
}

}  // namespace

Scenario Scenario::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open scenario file: " + path);
  Scenario sc;
  bool saw_schema = false;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) throw ConfigError(where + ": expected 'key = value'");

    try {
      if (key == "schema") {
        if (std::stoi(val) != 1) throw ConfigError(where + ": unsupported schema version " + val);
        saw_schema = true;
      } else if (key == "seed") sc.seed = std::stoull(val);
      else if (key == "ring.k") sc.ring_k = std::stoi(val);
      else if (key == "ring.f") sc.ring_f = std::stoi(val);
      else if (key == "model.hidden") sc.model.hidden = std::stoul(val);
      else if (key == "model.heads") sc.model.heads = std::stoul(val);
      else if (key == "model.head_dim") sc.model.head_dim = std::stoul(val);
      else if (key == "model.ffn") sc.model.ffn = std::stoul(val);
      else if (key == "model.layers") sc.model.layers = std::stoul(val);
      else if (key == "model.use_ffn") sc.model.use_ffn = parse_bool(val, where);
      else if (key == "model.delta_oracle") sc.model.delta_oracle = std::stod(val);
      else if (key == "model.predictor_rank") sc.model.predictor_rank = std::stoul(val);
      else if (key == "model.predictor_delta") sc.model.predictor_delta = std::stod(val);
      else if (key == "model.predictor_target_recall")
        sc.model.predictor_target_recall = std::stod(val);
      else if (key == "run.prompt") sc.prompt = std::stoul(val);
      else if (key == "run.generate") sc.generate = std::stoul(val);
      else if (key == "run.backend") {
        if (val == "dense") sc.mode.backend = Backend::dense;
        else if (val == "spgemm") sc.mode.backend = Backend::spgemm;
        else if (val == "sparse") sc.mode.backend = Backend::sparse;
        else throw ConfigError(where + ": unknown backend '" + val + "'");
      } else if (key == "run.source") {
        if (val == "oracle") sc.mode.source = SparsitySource::oracle;
        else if (val == "predictor") sc.mode.source = SparsitySource::predictor;
        else if (val == "synthetic") sc.mode.source = SparsitySource::synthetic;
        else if (val == "trace") sc.mode.source = SparsitySource::trace;
        else throw ConfigError(where + ": unknown sparsity source '" + val + "'");
      } else if (key == "run.structure") {
        if (val == "column") sc.mode.structure = SynthStructure::column;
        else if (val == "elementwise") sc.mode.structure = SynthStructure::elementwise;
        else if (val == "head") sc.mode.structure = SynthStructure::head;
        else throw ConfigError(where + ": unknown structure '" + val + "'");
      } else if (key == "run.ffn_sparsity") sc.mode.ffn_sparsity = std::stod(val);
      else if (key == "run.mha_sparsity") sc.mode.mha_sparsity = std::stod(val);
      else if (key == "run.cache") {
        if (val == "pr") sc.mode.cache = CacheStrategy::pr;
        else if (val == "mr") sc.mode.cache = CacheStrategy::mr;
        else if (val == "mr_prefetch") sc.mode.cache = CacheStrategy::mr_prefetch;
        else throw ConfigError(where + ": unknown cache strategy '" + val + "'");
      } else if (key == "run.dp_eps") sc.mode.dp_eps = parse_eps(val);
      else if (key == "run.dp_flip_gain") sc.mode.dp_flip_gain = std::stod(val);
      else if (key == "run.exec") sc.mode.exec = parse_bool(val, where);
      else if (key == "run.charge_predictor") sc.mode.charge_predictor = parse_bool(val, where);
      else if (key == "run.local_truncation") sc.mode.local_truncation = parse_bool(val, where);
      else if (key == "run.policy_w") sc.mode.policy_w = std::stoull(val);
      else if (key == "run.policy_x") sc.mode.policy_x = std::stoull(val);
      else if (key == "run.policy_w_joint") sc.mode.policy_w_joint = parse_bool(val, where);
      else if (key == "run.trace") sc.trace_kind = val;
      else if (key == "run.trace_rate") sc.trace_rate = std::stod(val);
      else if (key == "cost.compare") sc.costs.compare_per_element = std::stoull(val);
      else if (key == "cost.relu") sc.costs.relu_per_element = std::stoull(val);
      else if (key == "cost.softmax_row") sc.costs.softmax_per_row = std::stoull(val);
      else if (key == "cost.layernorm") sc.costs.layernorm_per_element = std::stoull(val);
      else if (key == "cost.file") sc.costs = IdealCostModel::from_file(val);
      else if (key == "transport.bandwidth") {
        bandwidth_preset(val);  // validate
        sc.transport.bandwidth = val;
      } else if (key == "transport.rtt_ms") sc.transport.rtt_ms = std::stod(val);
      else if (key == "out.report") sc.report_path = val;
      else if (key == "out.trace") sc.trace_path = val;
      else if (key == "dealer.cache") sc.dealer_cache = val;
      else throw ConfigError(where + ": unknown key '" + key + "'");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(where + ": bad value '" + val + "' (" + e.what() + ")");
    }
  }
  if (!saw_schema) throw ConfigError(path + ": missing 'schema = 1'");
  return sc;
}

uint64_t Scenario::hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  std::ostringstream os;
  os << schema << "|" << seed << "|" << ring_k << "/" << ring_f << "|" << model.hidden << ","
     << model.heads << "," << model.head_dim << "," << model.ffn << "," << model.layers << ","
     << model.use_ffn << "," << model.delta_oracle << "," << model.predictor_rank << ","
     << model.predictor_delta << "|" << backend_name(mode.backend) << ","
     << source_name(mode.source) << "," << structure_name(mode.structure) << ","
     << mode.ffn_sparsity << "," << mode.mha_sparsity << "," << cache_name(mode.cache) << ","
     << mode.dp_eps << "," << mode.exec << "," << mode.charge_predictor << ","
     << mode.local_truncation << "," << mode.policy_w << "," << mode.policy_x << "|" << prompt
     << "," << generate << "|" << costs.compare_per_element << "," << costs.relu_per_element
     << "," << costs.softmax_per_row << "," << costs.layernorm_per_element << "|" << trace_kind
     << "," << trace_rate;
  return fnv1a(h, os.str());
}

HeadTrace phased2_trace(size_t heads, size_t steps) {
  // Rate-1/2 mix: mostly short alternating runs, a few long-period heads so
  // prefetching engages late in the sequence.
  std::vector<HeadTrace::Phase> spans(heads);
  for (size_t h = 0; h < heads; ++h) {
    if (h + 1 == heads && heads >= 4) spans[h] = {192, 192, 0};
    else if (h + 2 == heads && heads >= 6) spans[h] = {96, 96, 96};
    else if (h + 3 == heads && heads >= 8) spans[h] = {96, 96, 0};
    else spans[h] = {4, 4, (h % 2) * 4};
  }
  return HeadTrace::phased(heads, steps, spans);
}

ScenarioRun run_scenario(const Scenario& sc) {
  ScenarioRun out;
  out.scenario = sc;
  Engine engine(sc.model, sc.mode, sc.codec(), sc.costs, sc.seed);
  if (sc.mode.source == SparsitySource::trace) {
    const size_t steps = sc.prompt + sc.generate + 1;
    if (sc.trace_kind == "phased2" || sc.trace_kind.empty())
      engine.set_head_trace(phased2_trace(sc.model.heads, steps));
    else if (sc.trace_kind == "iid")
      engine.set_head_trace(HeadTrace::iid(sc.model.heads, steps, sc.trace_rate, sc.seed));
    else
      throw ConfigError("unknown trace kind '" + sc.trace_kind + "'");
  }
  out.result = engine.run(sc.prompt, sc.generate);
  return out;
}

std::string report_csv(const Scenario& sc, const RunResult& r) {
  const BandwidthPreset bw = bandwidth_preset(sc.transport.bandwidth);
  const double rtt_s = sc.transport.rtt_ms / 1000.0;
  std::ostringstream os;
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(sc.hash()));
  os << "# schema=1\n";
  os << "# scenario=" << hash_hex << "\n";
  os << "# model=h" << sc.model.hidden << ",H" << sc.model.heads << ",d" << sc.model.head_dim
     << ",ffn" << (sc.model.use_ffn ? sc.model.ffn : 0) << ",L" << sc.model.layers << "\n";
  os << "# ring=k" << sc.ring_k << ",f" << sc.ring_f << "\n";
  os << "# run=" << backend_name(sc.mode.backend) << "," << source_name(sc.mode.source) << ","
     << cache_name(sc.mode.cache) << ",prompt" << sc.prompt << ",gen" << sc.generate << "\n";
  os << "# bandwidth=" << bw.name << "\n";
  os << "# rtt_ms=" << sc.transport.rtt_ms << "\n";
  os << "# total_elements=" << r.total_elements << "\n";
  os << "# total_rounds=" << r.total_rounds << "\n";
  os << "# offline_elements=" << r.offline_elements << "\n";
  os << "# refill_elements=" << r.refill_elements_total << "\n";
  os << "# predictor_precision=" << r.predictor_precision << "\n";
  os << "# predictor_recall=" << r.predictor_recall << "\n";

  // Analytic dense-equivalent of the FC phases for the same shapes, giving
  // the run's sparse-vs-dense communication ratio on those layers.
  if (sc.model.use_ffn && sc.mode.backend != Backend::dense) {
    const uint64_t fc_measured = [&] {
      uint64_t v = 0;
      for (const auto& row : r.phases)
        if (row.phase == "FC1" || row.phase == "FC2") v += row.sent[0] + row.sent[1];
      return v;
    }();
    uint64_t fc_dense = 0;
    auto add_step = [&](size_t m) {
      fc_dense += gemm_total_elements(m, sc.model.hidden, sc.model.ffn);
      fc_dense += gemm_total_elements(m, sc.model.ffn, sc.model.hidden);
      if (!sc.mode.local_truncation)
        fc_dense += 2 * (m * sc.model.ffn + m * sc.model.hidden);  // rescales
    };
    for (size_t l = 0; l < sc.model.layers; ++l) {
      add_step(sc.prompt);
      for (size_t i = 1; i < sc.generate; ++i) add_step(1);
    }
    if (fc_measured > 0)
      os << "# somm_gemm_ratio=" << static_cast<double>(fc_dense) / fc_measured << "\n";
  }

  std::ostringstream body;
  body << "phase,party,elements,bytes,rounds,wall_time_s\n";
  auto emit = [&](const std::string& phase, int party, uint64_t elems, uint64_t rounds) {
    const double bytes = static_cast<double>(elems) * sc.ring_k / 8.0;
    const double wall = rounds * rtt_s + bytes * 8.0 / bw.bits_per_s;
    body << phase << "," << party << "," << elems << "," << static_cast<uint64_t>(bytes) << ","
         << rounds << "," << wall << "\n";
  };
  uint64_t tot_sent[2] = {0, 0}, tot_rounds = 0, tot_off[2] = {0, 0};
  for (const auto& row : r.phases) {
    tot_sent[0] += row.sent[0];
    tot_sent[1] += row.sent[1];
    tot_rounds += row.rounds;
    tot_off[0] += row.offline[0];
    tot_off[1] += row.offline[1];
    if (row.sent[0] + row.sent[1] + row.rounds == 0) continue;  // pure offline row
    emit(row.phase, 1, row.sent[0], row.rounds);
    emit(row.phase, 2, row.sent[1], row.rounds);
  }
  emit("total", 1, tot_sent[0], tot_rounds);
  emit("total", 2, tot_sent[1], tot_rounds);
  if (tot_off[0] + tot_off[1] > 0) {
    emit("offline", 1, tot_off[0], 0);
    emit("offline", 2, tot_off[1], 0);
  }
  os << body.str();
  return os.str();
}

void write_run_outputs(const ScenarioRun& run) {
  {
    std::ofstream os(run.scenario.report_path, std::ios::trunc | std::ios::binary);
    if (!os) throw ConfigError("cannot write report: " + run.scenario.report_path);
    os << report_csv(run.scenario, run.result);
  }
  {
    std::ofstream os(run.scenario.trace_path, std::ios::trunc | std::ios::binary);
    if (!os) throw ConfigError("cannot write trace: " + run.scenario.trace_path);
    os << run.result.trace_csv();
  }
}

namespace {

struct ParsedReport {
  std::map<std::string, std::string> meta;
  // phase -> summed elements over both parties; rounds (per phase, once)
  std::vector<std::pair<std::string, std::pair<uint64_t, uint64_t>>> phases;
};

ParsedReport parse_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open report: " + path);
  ParsedReport rep;
  std::string line;
  bool header_seen = false;
  std::map<std::string, size_t> index;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos)
        rep.meta[trim(line.substr(1, eq - 1))] = trim(line.substr(eq + 1));
      continue;
    }
    if (!header_seen) {
      header_seen = true;  // column header line
      continue;
    }
    std::istringstream ls(line);
    std::string phase, field;
    std::getline(ls, phase, ',');
    std::getline(ls, field, ',');  // party
    std::getline(ls, field, ',');  // elements
    const uint64_t elems = std::stoull(field);
    std::getline(ls, field, ',');  // bytes
    std::getline(ls, field, ',');  // rounds
    const uint64_t rounds = std::stoull(field);
    auto it = index.find(phase);
    if (it == index.end()) {
      index[phase] = rep.phases.size();
      rep.phases.push_back({phase, {elems, rounds}});
    } else {
      rep.phases[it->second].second.first += elems;
    }
  }
  return rep;
}

}  // namespace

std::string compare_reports(const std::string& path_a, const std::string& path_b) {
  ParsedReport a = parse_report(path_a);
  ParsedReport b = parse_report(path_b);
  for (const char* key : {"model", "ring"}) {
    if (a.meta[key] != b.meta[key])
      throw ConfigError(std::string("reports are not comparable: ") + key + " differs (" +
                        a.meta[key] + " vs " + b.meta[key] + ")");
  }
  std::ostringstream os;
  os << "phase,elements_a,elements_b,ratio_a_over_b\n";
  auto find_b = [&](const std::string& phase) -> const std::pair<uint64_t, uint64_t>* {
    for (const auto& p : b.phases)
      if (p.first == phase) return &p.second;
    return nullptr;
  };
  for (const auto& p : a.phases) {
    const auto* other = find_b(p.first);
    if (!other) continue;
    const double ratio = other->first == 0
                             ? (p.second.first == 0 ? 1.0 : std::numeric_limits<double>::infinity())
                             : static_cast<double>(p.second.first) / other->first;
    os << p.first << "," << p.second.first << "," << other->first << "," << ratio << "\n";
  }
  // Wall-time ratios under each bandwidth preset (rtt from report A's meta).
  const double rtt_s = std::stod(a.meta.count("rtt_ms") ? a.meta["rtt_ms"] : "1") / 1000.0;
  auto total = [&](const ParsedReport& r) -> std::pair<uint64_t, uint64_t> {
    for (const auto& p : r.phases)
      if (p.first == "total") return p.second;
    return {0, 0};
  };
  auto ka = total(a), kb = total(b);
  const int ring_bits = [&] {
    std::string m = a.meta.count("ring") ? a.meta["ring"] : "k64,f16";
    return std::stoi(m.substr(1, m.find(',') - 1));
  }();
  os << "wall_time_ratio_by_bandwidth\n";
  for (const auto& preset : bandwidth_presets()) {
    auto wall = [&](const std::pair<uint64_t, uint64_t>& t) {
      const double bytes = static_cast<double>(t.first) * ring_bits / 8.0;
      return t.second * rtt_s + bytes * 8.0 / preset.bits_per_s;
    };
    const double wa = wall(ka), wb = wall(kb);
    os << preset.name << "," << wa << "," << wb << "," << (wb > 0 ? wa / wb : 1.0) << "\n";
  }
  return os.str();
}

std::string sweep_axis(const Scenario& base, const std::string& axis, double from, double to,
                       size_t steps) {
  if (axis != "sparsity") throw ConfigError("sweep supports the 'sparsity' axis");
  if (steps < 2) throw ConfigError("sweep needs at least 2 steps");
  std::ostringstream os;
  os << "sparsity,total_elements,total_rounds,refill_elements\n";
  for (size_t i = 0; i < steps; ++i) {
    Scenario sc = base;
    const double v = from + (to - from) * static_cast<double>(i) / (steps - 1);
    sc.mode.ffn_sparsity = v;
    ScenarioRun run = run_scenario(sc);
    os << v << "," << run.result.total_elements << "," << run.result.total_rounds << ","
       << run.result.refill_elements_total << "\n";
  }
  return os.str();
}

}  // namespace smpc
