// temsim command line: validate scenarios, run simulations, compare runs.
//
// Exit codes: 0 success, 1 domain error (invalid scenario, simulation
// fault, incomparable runs), 2 I/O error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "temsim/engine.hpp"
#include "temsim/output.hpp"
#include "temsim/scenario.hpp"

namespace {

constexpr const char* kVersion = "temsim 0.1.0";
constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitIo = 2;

struct FlagOverrides {
  std::optional<std::uint64_t> seed;
  bool no_l3 = false;
  bool no_powerflow = false;
  bool no_price_game = false;
  bool no_p2p = false;
  bool no_vpp = false;

  void apply(temsim::Scenario& sc) const {
    if (seed) sc.seed = *seed;
    if (no_l3) sc.flags.l3_enabled = false;
    if (no_powerflow) sc.flags.powerflow_enabled = false;
    if (no_price_game) sc.flags.price_game_enabled = false;
    if (no_p2p) sc.flags.p2p_enabled = false;
    if (no_vpp) sc.flags.vpp_enabled = false;
  }
};

int cmd_validate(const std::string& path) {
  try {
    temsim::load_scenario(path);
    return kExitOk;
  } catch (const temsim::ValidationError& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
}

int cmd_run(const std::string& path, const std::string& out_dir, const FlagOverrides& overrides) {
  temsim::Scenario sc;
  try {
    sc = temsim::load_scenario(path);
  } catch (const temsim::ValidationError& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  overrides.apply(sc);
  try {
    const auto report = temsim::run_with_baseline(sc);
    temsim::write_run_outputs(report, out_dir, kVersion);
  } catch (const temsim::SimFault& e) {
    std::cerr << "simulation fault: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

int cmd_compare(const std::string& dir_a, const std::string& dir_b, const std::string& out_file) {
  try {
    const auto cmp = temsim::compare_runs(dir_a, dir_b);
    std::printf("%-16s %14s %14s %14s\n", "prosumer", "cost_a", "cost_b", "delta");
    for (const auto& row : cmp.rows) {
      std::printf("%-16s %14.4f %14.4f %14.4f\n", row.agent.c_str(), row.cost_a, row.cost_b,
                  row.cost_b - row.cost_a);
    }
    std::printf("%-16s %14.4f %14.4f %14.4f\n", "total_penalty", cmp.penalty_a, cmp.penalty_b,
                cmp.penalty_b - cmp.penalty_a);
    std::printf("%-16s %14.4f %14.4f %14.4f\n", "p2p_volume_kwh", cmp.p2p_volume_a,
                cmp.p2p_volume_b, cmp.p2p_volume_b - cmp.p2p_volume_a);
    if (!out_file.empty()) {
      temsim::write_file(out_file, temsim::comparison_json(cmp));
    }
    return kExitOk;
  } catch (const temsim::ValidationError& e) {
    std::cerr << "cannot compare: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "malformed summary: " << e.what() << "\n";
    return kExitDomain;
  }
}

int cmd_report(const std::string& dir) {
  try {
    std::ifstream in(std::filesystem::path(dir) / "summary.json");
    if (!in) {
      std::cerr << "io error: cannot open " << dir << "/summary.json\n";
      return kExitIo;
    }
    nlohmann::json j;
    in >> j;
    std::printf("seed: %llu\n",
                static_cast<unsigned long long>(j.value("seed", 0ULL)));
    std::printf("%-16s %14s %14s\n", "prosumer", "cost", "savings");
    const auto& prosumers = j.at("prosumers");
    for (auto it = prosumers.begin(); it != prosumers.end(); ++it) {
      std::printf("%-16s %14.4f %14.4f\n", it.key().c_str(), it.value().value("cost", 0.0),
                  it.value().value("savings", 0.0));
    }
    const auto& totals = j.at("totals");
    std::printf("revenue: %.4f  penalty: %.4f  p2p volume: %.4f kWh\n",
                totals.value("revenue", 0.0), totals.value("penalty", 0.0),
                totals.value("p2p_volume_kwh", 0.0));
    const auto& nash = j.at("nash");
    std::printf("price games: %d (%d without equilibrium)  wash warnings: %d\n",
                nash.value("games", 0), nash.value("nonconverged", 0),
                j.value("wash_trade_warnings", 0));
    return kExitOk;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "malformed summary: " << e.what() << "\n";
    return kExitDomain;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical peer-to-peer energy market simulator", "temsim"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string scenario_path, out_dir, dir_a, dir_b, compare_out;
  FlagOverrides overrides;

  auto* validate = app.add_subcommand("validate", "check a scenario file");
  validate->add_option("scenario", scenario_path, "scenario json path")->required();

  auto* run = app.add_subcommand("run", "simulate a scenario and write outputs");
  run->add_option("scenario", scenario_path, "scenario json path")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  std::uint64_t seed_value = 0;
  auto* seed_opt = run->add_option("--seed", seed_value, "override the scenario seed");
  run->add_flag("--no-l3", overrides.no_l3, "disable the 5-minute secondary market");
  run->add_flag("--no-powerflow", overrides.no_powerflow, "disable the feeder screen");
  run->add_flag("--no-price-game", overrides.no_price_game, "price all orders at the band midpoint");
  run->add_flag("--no-p2p", overrides.no_p2p, "disable peer trading entirely");
  run->add_flag("--no-vpp", overrides.no_vpp, "disable aggregation and ancillary bidding");

  auto* compare = app.add_subcommand("compare", "diff two run directories");
  compare->add_option("run_a", dir_a, "first run directory")->required();
  compare->add_option("run_b", dir_b, "second run directory")->required();
  compare->add_option("--out", compare_out, "write compare.json to this path");

  auto* report = app.add_subcommand("report", "print the summary of a run directory");
  report->add_option("run_dir", dir_a, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (seed_opt->count() > 0) overrides.seed = seed_value;

  if (validate->parsed()) return cmd_validate(scenario_path);
  if (run->parsed()) return cmd_run(scenario_path, out_dir, overrides);
  if (compare->parsed()) {
    return cmd_compare(dir_a, dir_b,
                       compare_out.empty() ? (std::filesystem::path(dir_b) / "compare.json").string()
                                           : compare_out);
  }
  if (report->parsed()) return cmd_report(dir_a);
  return kExitDomain;
}
