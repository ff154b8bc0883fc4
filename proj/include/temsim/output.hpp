#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "temsim/engine.hpp"

namespace temsim {

/// All floating-point output is serialized with 9 significant digits so
/// repeated runs compare byte-for-byte.
inline std::string g9(double v) {
  if (v == 0.0) v = 0.0;  // normalize -0
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << content;
  if (!out) throw std::ios_base::failure("short write to " + path.string());
}

inline std::string ledger_csv(const RunReport& r) {
  std::string s = "slot_start,payer,payee,amount,reason\n";
  for (const auto& e : r.ledger.entries()) {
    s += std::to_string(e.slot_start) + ',' + e.payer + ',' + e.payee + ',' + g9(e.amount) + ',' +
         flow_reason_name(e.reason) + '\n';
  }
  return s;
}

inline std::string contracts_csv(const RunReport& r) {
  std::string s = "slot_start,feeder,seller,buyer,quantity_kwh,price\n";
  for (const auto& c : r.contracts) {
    s += std::to_string(c.slot.start) + ',' + c.feeder.value + ',' + c.seller.value + ',' +
         c.buyer.value + ',' + g9(c.quantity_kwh) + ',' + g9(c.price) + '\n';
  }
  return s;
}

inline std::string ancillary_csv(const RunReport& r) {
  std::string s =
      "slot_start,vpp,bid_kwh,offer_price,awarded_kwh,clearing_price,delivered_kwh,"
      "shortfall_kwh,revenue,penalty\n";
  for (const auto& a : r.ancillary) {
    s += std::to_string(a.slot_start) + ',' + a.vpp.value + ',' + g9(a.bid_kwh) + ',' +
         g9(a.offer_price) + ',' + g9(a.awarded_kwh) + ',' + g9(a.clearing_price) + ',' +
         g9(a.delivered_kwh) + ',' + g9(a.shortfall_kwh) + ',' + g9(a.revenue) + ',' +
         g9(a.penalty) + '\n';
  }
  return s;
}

inline std::string l3_trades_csv(const RunReport& r) {
  std::string s = "slot_start,seller,buyer,quantity_kwh,payment\n";
  for (const auto& t : r.l3_trades) {
    s += std::to_string(t.slot.start) + ',' + t.seller.value + ',' + t.buyer.value + ',' +
         g9(t.quantity_kwh) + ',' + g9(t.payment) + '\n';
  }
  return s;
}

inline std::string violations_csv(const RunReport& r) {
  std::string s = "step_start,feeder,node,kind,v_pu,excursion_pu\n";
  for (const auto& v : r.violations) {
    s += std::to_string(v.step_start) + ',' + v.feeder.value + ',' + v.node + ',' +
         (v.kind == ViolationKind::over_voltage ? "over_voltage" : "under_voltage") + ',' +
         g9(v.v_pu) + ',' + g9(v.excursion_pu) + '\n';
  }
  return s;
}

namespace detail {

// Tiny ordered-JSON emitter with g9 number formatting; nlohmann would print
// shortest-roundtrip doubles, which breaks the 9-digit output contract.
class JsonWriter {
 public:
  std::string out;
  void raw(const std::string& s) { out += s; }
  void str(const std::string& s) {
    out += '"';
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    out += '"';
  }
  void num(double v) { out += g9(v); }
};

}  // namespace detail

inline std::string summary_json(const RunReport& r) {
  detail::JsonWriter w;
  w.raw("{\n  \"seed\": " + std::to_string(r.seed) + ",\n");
  w.raw("  \"flags\": {");
  w.raw("\"p2p_enabled\": " + std::string(r.flags.p2p_enabled ? "true" : "false"));
  w.raw(", \"price_game_enabled\": " + std::string(r.flags.price_game_enabled ? "true" : "false"));
  w.raw(", \"vpp_enabled\": " + std::string(r.flags.vpp_enabled ? "true" : "false"));
  w.raw(", \"l3_enabled\": " + std::string(r.flags.l3_enabled ? "true" : "false"));
  w.raw(", \"powerflow_enabled\": " + std::string(r.flags.powerflow_enabled ? "true" : "false"));
  w.raw("},\n");

  w.raw("  \"prosumers\": {\n");
  bool first = true;
  for (const auto& [agent, cost] : r.prosumer_cost) {
    if (!first) w.raw(",\n");
    first = false;
    w.raw("    ");
    w.str(agent.value);
    w.raw(": {\"cost\": ");
    w.num(cost);
    if (r.prosumer_savings.count(agent)) {
      w.raw(", \"savings\": ");
      w.num(r.prosumer_savings.at(agent));
    }
    w.raw("}");
  }
  w.raw("\n  },\n");

  w.raw("  \"vpps\": {\n");
  first = true;
  for (const auto& [vpp, revenue] : r.vpp_revenue) {
    if (!first) w.raw(",\n");
    first = false;
    w.raw("    ");
    w.str(vpp.value);
    w.raw(": {\"revenue\": ");
    w.num(revenue);
    w.raw(", \"penalty\": ");
    w.num(r.vpp_penalty.count(vpp) ? r.vpp_penalty.at(vpp) : 0.0);
    w.raw("}");
  }
  w.raw("\n  },\n");

  double max_energy_residual = 0;
  for (const auto& row : r.energy) {
    max_energy_residual = std::max(max_energy_residual, std::abs(row.residual()));
  }
  w.raw("  \"totals\": {\"revenue\": ");
  w.num(r.total_revenue);
  w.raw(", \"penalty\": ");
  w.num(r.total_penalty);
  w.raw(", \"p2p_volume_kwh\": ");
  w.num(r.total_p2p_volume_kwh);
  w.raw(", \"deviation_paid\": ");
  w.num(r.total_deviation_paid);
  w.raw(", \"ledger_entries\": " + std::to_string(r.ledger.entries().size()));
  w.raw(", \"max_energy_residual_kwh\": ");
  w.num(max_energy_residual);
  w.raw("},\n");

  int nonconverged = 0;
  for (const auto& f : r.nash_flags) {
    if (!f.converged) ++nonconverged;
  }
  w.raw("  \"nash\": {\"games\": " + std::to_string(r.nash_flags.size()) +
        ", \"nonconverged\": " + std::to_string(nonconverged) + "},\n");
  w.raw("  \"wash_trade_warnings\": " + std::to_string(r.wash_warnings.size()) + "\n");
  w.raw("}\n");
  return w.out;
}

inline std::string run_meta_json(const RunReport& r, const std::string& version) {
  detail::JsonWriter w;
  w.raw("{\n  \"seed\": " + std::to_string(r.seed) + ",\n");
  w.raw("  \"version\": ");
  w.str(version);
  w.raw(",\n  \"flags\": {");
  w.raw("\"p2p_enabled\": " + std::string(r.flags.p2p_enabled ? "true" : "false"));
  w.raw(", \"price_game_enabled\": " + std::string(r.flags.price_game_enabled ? "true" : "false"));
  w.raw(", \"vpp_enabled\": " + std::string(r.flags.vpp_enabled ? "true" : "false"));
  w.raw(", \"l3_enabled\": " + std::string(r.flags.l3_enabled ? "true" : "false"));
  w.raw(", \"powerflow_enabled\": " + std::string(r.flags.powerflow_enabled ? "true" : "false"));
  w.raw("}\n}\n");
  return w.out;
}

/// Writes the six output files into out_dir (created if missing).
inline void write_run_outputs(const RunReport& r, const std::filesystem::path& out_dir,
                              const std::string& version) {
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "ledger.csv", ledger_csv(r));
  write_file(out_dir / "contracts.csv", contracts_csv(r));
  write_file(out_dir / "ancillary.csv", ancillary_csv(r));
  write_file(out_dir / "l3_trades.csv", l3_trades_csv(r));
  write_file(out_dir / "violations.csv", violations_csv(r));
  write_file(out_dir / "summary.json", summary_json(r));
  write_file(out_dir / "run_meta.json", run_meta_json(r, version));
}

struct ComparisonRow {
  std::string agent;
  double cost_a = 0, cost_b = 0;
  double savings_a = 0, savings_b = 0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  double penalty_a = 0, penalty_b = 0;
  double p2p_volume_a = 0, p2p_volume_b = 0;
};

/// Compares two run directories through their summary files.  Agent sets
/// must match exactly.
inline Comparison compare_runs(const std::filesystem::path& dir_a,
                               const std::filesystem::path& dir_b) {
  auto load = [](const std::filesystem::path& dir) {
    std::ifstream in(dir / "summary.json");
    if (!in) throw std::ios_base::failure("cannot open " + (dir / "summary.json").string());
    nlohmann::json j;
    in >> j;
    return j;
  };
  const auto a = load(dir_a);
  const auto b = load(dir_b);

  const auto& pa = a.at("prosumers");
  const auto& pb = b.at("prosumers");
  for (auto it = pa.begin(); it != pa.end(); ++it) {
    if (!pb.contains(it.key())) {
      throw ValidationError("runs are not comparable: agent " + it.key() +
                            " missing from the second run");
    }
  }
  for (auto it = pb.begin(); it != pb.end(); ++it) {
    if (!pa.contains(it.key())) {
      throw ValidationError("runs are not comparable: agent " + it.key() +
                            " missing from the first run");
    }
  }

  Comparison cmp;
  for (auto it = pa.begin(); it != pa.end(); ++it) {
    ComparisonRow row;
    row.agent = it.key();
    row.cost_a = it.value().value("cost", 0.0);
    row.savings_a = it.value().value("savings", 0.0);
    row.cost_b = pb.at(it.key()).value("cost", 0.0);
    row.savings_b = pb.at(it.key()).value("savings", 0.0);
    cmp.rows.push_back(row);
  }
  cmp.penalty_a = a.at("totals").value("penalty", 0.0);
  cmp.penalty_b = b.at("totals").value("penalty", 0.0);
  cmp.p2p_volume_a = a.at("totals").value("p2p_volume_kwh", 0.0);
  cmp.p2p_volume_b = b.at("totals").value("p2p_volume_kwh", 0.0);
  return cmp;
}

inline std::string comparison_json(const Comparison& cmp) {
  detail::JsonWriter w;
  w.raw("{\n  \"prosumers\": {\n");
  bool first = true;
  for (const auto& row : cmp.rows) {
    if (!first) w.raw(",\n");
    first = false;
    w.raw("    ");
    w.str(row.agent);
    w.raw(": {\"cost_delta\": ");
    w.num(row.cost_b - row.cost_a);
    w.raw(", \"savings_delta\": ");
    w.num(row.savings_b - row.savings_a);
    w.raw("}");
  }
  w.raw("\n  },\n  \"penalty_delta\": ");
  w.num(cmp.penalty_b - cmp.penalty_a);
  w.raw(",\n  \"p2p_volume_delta\": ");
  w.num(cmp.p2p_volume_b - cmp.p2p_volume_a);
  w.raw("\n}\n");
  return w.out;
}

}  // namespace temsim
