#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "temsim/time_grid.hpp"
#include "temsim/units.hpp"

namespace temsim {

enum class Side { buy, sell };

/// Limit order for one feeder-level delivery slot.  Books close 30 minutes
/// ahead of delivery.
struct Order {
  AgentId agent;
  FeederId feeder;
  MarketSlot slot;  // L1
  Side side = Side::buy;
  double quantity_kwh = 0;  // > 0
  double limit_price = 0;   // $/kWh
  int submitted_at = 0;     // minutes
};

/// Matched bilateral trade.  Ids are a deterministic sequence so output
/// files are byte-stable across runs.
struct Contract {
  long id = 0;
  AgentId seller;
  AgentId buyer;
  FeederId feeder;
  MarketSlot slot;
  double quantity_kwh = 0;
  double price = 0;  // $/kWh, midpoint of the crossing limits
};

struct OverspillReport {
  FeederId feeder;
  MarketSlot slot;
  double unmatched_sell_kwh = 0;
  double unmatched_buy_kwh = 0;

  // Both fields can be positive when the remaining limits fail to cross.
  double net_kwh() const { return unmatched_sell_kwh - unmatched_buy_kwh; }
};

struct MatchResult {
  std::vector<Contract> contracts;
  OverspillReport overspill;
};

/// Clears one feeder's book for one slot: sellers ascend by (limit, agent),
/// buyers descend by (limit, agent), greedy crossing at the midpoint price
/// with partial fills.  Self-crosses are skipped deterministically.
inline MatchResult match_orders(const std::vector<Order>& orders, const MarketSlot& slot,
                                const FeederId& feeder, long& next_contract_id) {
  struct Entry {
    AgentId agent;
    double limit = 0;
    double remaining = 0;
  };
  std::vector<Entry> sellers, buyers;
  for (const Order& o : orders) {
    if (!(o.slot == slot) || o.feeder != feeder) {
      throw ValidationError("order for agent " + o.agent.value + " does not belong to feeder " +
                            feeder.value + " slot " + std::to_string(slot.start));
    }
    if (o.submitted_at > slot.start - 30) {
      throw ValidationError("order from " + o.agent.value + " submitted after book close for slot " +
                            std::to_string(slot.start));
    }
    const double q = quantize_energy(o.quantity_kwh);
    if (q <= 0) {
      throw ValidationError("order from " + o.agent.value + " has non-positive quantity");
    }
    (o.side == Side::sell ? sellers : buyers).push_back(Entry{o.agent, o.limit_price, q});
  }

  std::sort(sellers.begin(), sellers.end(), [](const Entry& a, const Entry& b) {
    return a.limit != b.limit ? a.limit < b.limit : a.agent < b.agent;
  });
  std::sort(buyers.begin(), buyers.end(), [](const Entry& a, const Entry& b) {
    return a.limit != b.limit ? a.limit > b.limit : a.agent < b.agent;
  });

  MatchResult result;
  result.overspill.feeder = feeder;
  result.overspill.slot = slot;

  std::size_t si = 0, bi = 0;
  while (si < sellers.size() && bi < buyers.size()) {
    Entry& s = sellers[si];
    Entry& b = buyers[bi];
    if (s.remaining <= 0) { ++si; continue; }
    if (b.remaining <= 0) { ++bi; continue; }
    if (s.limit > b.limit) break;  // best remaining pair no longer crosses

    if (s.agent == b.agent) {
      // Never self-trade: prefer the next seller for this buyer, else the
      // next buyer for this seller, else stop (no other cross can exist).
      if (si + 1 < sellers.size() && sellers[si + 1].limit <= b.limit) {
        std::swap(sellers[si], sellers[si + 1]);
        continue;
      }
      if (bi + 1 < buyers.size() && buyers[bi + 1].limit >= s.limit) {
        std::swap(buyers[bi], buyers[bi + 1]);
        continue;
      }
      break;
    }

    const double q = quantize_energy(std::min(s.remaining, b.remaining));
    if (q > 0) {
      Contract c;
      c.id = next_contract_id++;
      c.seller = s.agent;
      c.buyer = b.agent;
      c.feeder = feeder;
      c.slot = slot;
      c.quantity_kwh = q;
      c.price = (s.limit + b.limit) / 2.0;
      result.contracts.push_back(std::move(c));
    }
    s.remaining = quantize_energy(s.remaining - q);
    b.remaining = quantize_energy(b.remaining - q);
  }

  for (const Entry& s : sellers) result.overspill.unmatched_sell_kwh += std::max(0.0, s.remaining);
  for (const Entry& b : buyers) result.overspill.unmatched_buy_kwh += std::max(0.0, b.remaining);
  result.overspill.unmatched_sell_kwh = quantize_energy(result.overspill.unmatched_sell_kwh);
  result.overspill.unmatched_buy_kwh = quantize_energy(result.overspill.unmatched_buy_kwh);
  return result;
}

/// Signed net position per feeder once matching is complete.
inline std::map<FeederId, double> compute_overspill(const std::vector<OverspillReport>& reports) {
  std::map<FeederId, double> net;
  for (const auto& r : reports) net[r.feeder] += r.net_kwh();
  for (auto& [_, v] : net) v = quantize_energy(v);
  return net;
}

}  // namespace temsim
