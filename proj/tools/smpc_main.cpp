#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "smpc/scenario.hpp"

namespace {

int run_cmd(const std::string& config, const std::string& bandwidth, int64_t seed_override,
            const std::string& dealer_cache) {
  smpc::Scenario sc = smpc::Scenario::from_file(config);
  if (!bandwidth.empty()) {
    smpc::bandwidth_preset(bandwidth);  // validate
    sc.transport.bandwidth = bandwidth;
  }
  if (seed_override >= 0) sc.seed = static_cast<uint64_t>(seed_override);
  if (!dealer_cache.empty()) sc.dealer_cache = dealer_cache;

  smpc::ScenarioRun run = smpc::run_scenario(sc);
  smpc::write_run_outputs(run);
  std::printf("run %016llx total_elements=%llu rounds=%llu offline=%llu report=%s trace=%s\n",
              static_cast<unsigned long long>(sc.hash()),
              static_cast<unsigned long long>(run.result.total_elements),
              static_cast<unsigned long long>(run.result.total_rounds),
              static_cast<unsigned long long>(run.result.offline_elements),
              sc.report_path.c_str(), sc.trace_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-party sparse private-inference protocol simulator"};
  app.require_subcommand(1);

  std::string config, bandwidth, dealer_cache;
  int64_t seed = -1;

  CLI::App* run = app.add_subcommand("run", "execute a scenario config");
  run->add_option("config", config, "scenario file")->required();
  run->add_option("--bandwidth", bandwidth, "bandwidth preset: 100Mbps|500Mbps|1Gbps|5Gbps");
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--dealer-cache", dealer_cache, "dealt-material cache file");

  std::string report_a, report_b;
  CLI::App* cmp = app.add_subcommand("compare", "ratio table between two report files");
  cmp->add_option("report_a", report_a, "first report.csv")->required();
  cmp->add_option("report_b", report_b, "second report.csv")->required();

  std::string sweep_config, axis = "sparsity=0.0:0.99";
  size_t steps = 5;
  std::string sweep_out;
  CLI::App* sw = app.add_subcommand("sweep", "run a scenario across an axis");
  sw->add_option("config", sweep_config, "scenario file")->required();
  sw->add_option("--axis", axis, "axis spec, e.g. sparsity=0.0:0.99");
  sw->add_option("--steps", steps, "number of points");
  sw->add_option("--out", sweep_out, "write CSV here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_cmd(config, bandwidth, seed, dealer_cache);
    if (cmp->parsed()) {
      std::cout << smpc::compare_reports(report_a, report_b);
      return 0;
    }
    if (sw->parsed()) {
      const auto eq = axis.find('=');
      const auto colon = axis.find(':', eq);
      if (eq == std::string::npos || colon == std::string::npos)
        throw smpc::ConfigError("axis must look like name=from:to");
      const std::string name = axis.substr(0, eq);
      const double from = std::stod(axis.substr(eq + 1, colon - eq - 1));
      const double to = std::stod(axis.substr(colon + 1));
      smpc::Scenario sc = smpc::Scenario::from_file(sweep_config);
      const std::string csv = smpc::sweep_axis(sc, name, from, to, steps);
      if (sweep_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream os(sweep_out, std::ios::trunc | std::ios::binary);
        os << csv;
      }
      return 0;
    }
  } catch (const smpc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const smpc::Error& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
