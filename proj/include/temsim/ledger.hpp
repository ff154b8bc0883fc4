#pragma once

#include <map>
#include <string>
#include <vector>

#include "temsim/exchange.hpp"
#include "temsim/units.hpp"

namespace temsim {

enum class FlowReason {
  p2p_contract,
  utility_purchase,
  net_metering,
  deviation,
  ancillary_revenue,
  ancillary_penalty,
  l3_transfer,
};

inline const char* flow_reason_name(FlowReason r) {
  switch (r) {
    case FlowReason::p2p_contract: return "p2p_contract";
    case FlowReason::utility_purchase: return "utility_purchase";
    case FlowReason::net_metering: return "net_metering";
    case FlowReason::deviation: return "deviation";
    case FlowReason::ancillary_revenue: return "ancillary_revenue";
    case FlowReason::ancillary_penalty: return "ancillary_penalty";
    case FlowReason::l3_transfer: return "l3_transfer";
  }
  return "?";
}

/// One money transfer.  Direction is payer -> payee and amounts are always
/// positive, so the ledger is zero-sum entry by entry.
struct LedgerEntry {
  int slot_start = 0;  // start minute of the slot the flow belongs to
  std::string payer;
  std::string payee;
  double amount = 0;  // $ > 0, on the 1e-9 lattice
  FlowReason reason = FlowReason::p2p_contract;
};

class SettlementLedger {
 public:
  /// Appends a transfer; zero amounts (after quantization) are dropped,
  /// negative amounts flip direction.
  void add(int slot_start, std::string payer, std::string payee, double amount,
           FlowReason reason) {
    double a = quantize_money(amount);
    if (a == 0.0) return;
    if (a < 0.0) {
      std::swap(payer, payee);
      a = -a;
    }
    entries_.push_back(LedgerEntry{slot_start, std::move(payer), std::move(payee), a, reason});
  }

  const std::vector<LedgerEntry>& entries() const { return entries_; }

  /// Signed net per party: positive means the party received money.
  std::map<std::string, double> net_by_party() const {
    std::map<std::string, double> net;
    for (const auto& e : entries_) {
      net[e.payee] += e.amount;
      net[e.payer] -= e.amount;
    }
    return net;
  }

  double signed_total() const {
    double t = 0;
    for (const auto& [_, v] : net_by_party()) t += v;
    return t;
  }

 private:
  std::vector<LedgerEntry> entries_;
};

/// Per-agent position for one L1 slot, as seen at settlement time.  Energy
/// credited to ancillary delivery is carved out of the net-metering residual
/// so it is never paid twice.
struct AgentSlotPosition {
  double planned_net_export_kwh = 0;   // dispatch-plan net position (sell - buy)
  double measured_net_export_kwh = 0;  // realized at the point of interconnection
  double planned_iso_share_kwh = 0;    // planned overspill channeled to the ancillary award
  double delivered_iso_share_kwh = 0;  // realized share of ancillary delivery
};

struct SlotTariffs {
  double utility_buy_price = 0;   // $/kWh, retail
  double net_metering_price = 0;  // $/kWh, export buy-back
};

/// After-the-fact settlement of one feeder slot: contracts pay out in full,
/// the planned residual trades with the utility, and the measured deviation
/// settles at retail (shortfall) or net-metering (surplus).
inline std::vector<LedgerEntry> settle_slot(const std::vector<Contract>& contracts,
                                            const std::map<AgentId, AgentSlotPosition>& positions,
                                            const SlotTariffs& tariffs, const MarketSlot& slot) {
  std::vector<LedgerEntry> out;
  auto push = [&](std::string payer, std::string payee, double amount, FlowReason reason) {
    double a = quantize_money(amount);
    if (a == 0.0) return;
    if (a < 0.0) {
      std::swap(payer, payee);
      a = -a;
    }
    out.push_back(LedgerEntry{slot.start, std::move(payer), std::move(payee), a, reason});
  };

  std::map<AgentId, double> contracted_net;
  for (const Contract& c : contracts) {
    push(c.buyer.value, c.seller.value, c.quantity_kwh * c.price, FlowReason::p2p_contract);
    contracted_net[c.seller] += c.quantity_kwh;
    contracted_net[c.buyer] -= c.quantity_kwh;
    if (!positions.count(c.seller) || !positions.count(c.buyer)) {
      throw SimFault("missing measurement for contracted agent in slot " +
                     std::to_string(slot.start));
    }
  }

  for (const auto& [agent, pos] : positions) {
    const double cnet = contracted_net.count(agent) ? contracted_net[agent] : 0.0;
    const double planned_residual =
        pos.planned_net_export_kwh - cnet - pos.planned_iso_share_kwh;
    if (planned_residual > 0) {
      push(kUtilityName, agent.value, planned_residual * tariffs.net_metering_price,
           FlowReason::net_metering);
    } else if (planned_residual < 0) {
      push(agent.value, kUtilityName, -planned_residual * tariffs.utility_buy_price,
           FlowReason::utility_purchase);
    }
    // Physical deviation from the plan: surpluses earn net-metering,
    // shortfalls buy replacement energy at retail.
    const double dev_noise = pos.measured_net_export_kwh - pos.planned_net_export_kwh;
    if (dev_noise > kEnergyQuantum / 2) {
      push(kUtilityName, agent.value, dev_noise * tariffs.net_metering_price,
           FlowReason::deviation);
    } else if (dev_noise < -kEnergyQuantum / 2) {
      push(agent.value, kUtilityName, -dev_noise * tariffs.utility_buy_price,
           FlowReason::deviation);
    }
    // Destination relabel between the ancillary channel and net metering:
    // exports that missed the ancillary award fall back to net-metering pay,
    // exports rerouted into the award give their net-metering pay back (the
    // aggregator pass-through compensates instead).  Both directions price
    // at net metering.
    const double dev_iso = pos.planned_iso_share_kwh - pos.delivered_iso_share_kwh;
    if (dev_iso > kEnergyQuantum / 2) {
      push(kUtilityName, agent.value, dev_iso * tariffs.net_metering_price,
           FlowReason::deviation);
    } else if (dev_iso < -kEnergyQuantum / 2) {
      push(agent.value, kUtilityName, -dev_iso * tariffs.net_metering_price,
           FlowReason::deviation);
    }
  }
  return out;
}

}  // namespace temsim
