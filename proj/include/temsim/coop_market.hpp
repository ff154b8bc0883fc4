#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "temsim/ledger.hpp"
#include "temsim/time_grid.hpp"
#include "temsim/units.hpp"

namespace temsim {

/// One aggregator's stance in a 5-minute balancing round: short of its
/// ancillary commitment (deficit) or holding spare realized overspill
/// (surplus).  Zero-zero positions are simply not posted.
struct VppPosition {
  VppId vpp;
  MarketSlot slot;  // L3
  double deficit_kwh = 0;
  double surplus_kwh = 0;

  void validate() const {
    if (deficit_kwh < 0 || surplus_kwh < 0) {
      throw ValidationError("position quantities must be nonnegative for " + vpp.value);
    }
    if (deficit_kwh > 0 && surplus_kwh > 0) {
      throw ValidationError("position for " + vpp.value + " is both short and long");
    }
  }
};

/// Coalition game over the posting aggregators.  The characteristic function
/// is the ancillary penalty a subset avoids by reallocating internally:
/// v(S) = penalty_rate * min(sum of deficits, sum of surpluses).  Exact
/// Shapley needs the full subset lattice, hence the 12-player bound.
struct CoalitionGame {
  static constexpr int kMaxPlayers = 12;

  std::vector<VppId> players;  // sorted ascending
  std::vector<double> deficit; // aligned with players
  std::vector<double> surplus;
  double penalty_rate = 0;
  MarketSlot slot;

  int size() const { return static_cast<int>(players.size()); }

  double value(std::uint32_t subset) const {
    double d = 0, s = 0;
    for (int i = 0; i < size(); ++i) {
      if (subset >> i & 1u) {
        d += deficit[i];
        s += surplus[i];
      }
    }
    return penalty_rate * std::min(d, s);
  }
};

inline double characteristic_value(const std::vector<VppPosition>& subset, double penalty_rate) {
  double d = 0, s = 0;
  for (const auto& p : subset) {
    d += p.deficit_kwh;
    s += p.surplus_kwh;
  }
  return penalty_rate * std::min(d, s);
}

/// Grand coalition of every posting aggregator.  With a superadditive value
/// the grand coalition weakly dominates any partition, so "forming
/// coalitions" reduces to filtering out empty positions.  Returns nothing
/// when no complementary pair exists.
inline std::optional<CoalitionGame> form_coalition(std::vector<VppPosition> positions,
                                                   double penalty_rate, const MarketSlot& slot) {
  std::vector<VppPosition> posting;
  for (auto& p : positions) {
    p.validate();
    if (p.deficit_kwh > 0 || p.surplus_kwh > 0) posting.push_back(p);
  }
  bool any_deficit = false, any_surplus = false;
  for (const auto& p : posting) {
    any_deficit = any_deficit || p.deficit_kwh > 0;
    any_surplus = any_surplus || p.surplus_kwh > 0;
  }
  if (!any_deficit || !any_surplus) return std::nullopt;
  if (posting.size() > CoalitionGame::kMaxPlayers) {
    throw ValidationError(std::to_string(posting.size()) +
                          " aggregators posted positions; exact allocation supports at most " +
                          std::to_string(CoalitionGame::kMaxPlayers));
  }
  std::sort(posting.begin(), posting.end(),
            [](const VppPosition& a, const VppPosition& b) { return a.vpp < b.vpp; });
  CoalitionGame game;
  game.penalty_rate = penalty_rate;
  game.slot = slot;
  for (const auto& p : posting) {
    game.players.push_back(p.vpp);
    game.deficit.push_back(p.deficit_kwh);
    game.surplus.push_back(p.surplus_kwh);
  }
  return game;
}

/// Exact Shapley value from a full characteristic table indexed by subset
/// bitmask (value[0] must be 0).  Subset-sum form of the formula.
inline std::vector<double> shapley_from_table(int n, const std::vector<double>& value) {
  if (n < 0 || n > CoalitionGame::kMaxPlayers) {
    throw ValidationError("shapley supports 0..12 players, got " + std::to_string(n));
  }
  if (value.size() != (1u << n)) {
    throw ValidationError("characteristic table must have 2^n entries");
  }
  std::vector<double> fact(n + 1, 1.0);
  for (int i = 1; i <= n; ++i) fact[i] = fact[i - 1] * i;

  std::vector<double> phi(n, 0.0);
  const std::uint32_t full = (1u << n) - 1;
  for (int i = 0; i < n; ++i) {
    const std::uint32_t others = full & ~(1u << i);
    // iterate subsets of "others"
    std::uint32_t s = 0;
    while (true) {
      const int sz = __builtin_popcount(s);
      const double weight = fact[sz] * fact[n - 1 - sz] / fact[n];
      phi[i] += weight * (value[s | (1u << i)] - value[s]);
      if (s == others) break;
      s = (s - others) & others;  // next subset of others
    }
  }
  return phi;
}

struct Allocation {
  std::map<VppId, double> phi;  // $ per player
};

inline Allocation shapley_allocate(const CoalitionGame& game) {
  const int n = game.size();
  std::vector<double> table(1u << n);
  for (std::uint32_t s = 0; s < table.size(); ++s) table[s] = game.value(s);
  const auto phi = shapley_from_table(n, table);
  Allocation out;
  for (int i = 0; i < n; ++i) out.phi[game.players[i]] = phi[i];

  double total = 0;
  for (const auto& [_, v] : out.phi) total += v;
  if (std::abs(total - game.value((1u << n) - 1)) > 1e-9) {
    throw SimFault("shapley allocation violates efficiency");
  }
  return out;
}

struct VppTrade {
  VppId seller;
  VppId buyer;
  MarketSlot slot;
  double quantity_kwh = 0;
  double payment = 0;  // reported implicit cost of this trade for the buyer
};

struct TransferOutcome {
  std::vector<VppTrade> trades;
  std::vector<LedgerEntry> entries;
  std::map<VppId, double> bought_kwh;  // deficit side, energy received
  std::map<VppId, double> sold_kwh;    // surplus side, energy delivered
};

/// Executes the grand-coalition reallocation: energy moves pro-rata from
/// surpluses to deficits; each deficit player keeps exactly its Shapley
/// share of the avoided penalty and each surplus player receives exactly its
/// share, so the money pool balances to zero by construction.
inline TransferOutcome execute_transfers(const CoalitionGame& game, const Allocation& alloc) {
  TransferOutcome out;
  const int n = game.size();
  double total_deficit = 0, total_surplus = 0;
  for (int i = 0; i < n; ++i) {
    total_deficit += game.deficit[i];
    total_surplus += game.surplus[i];
  }
  const double traded = std::min(total_deficit, total_surplus);
  if (traded <= 0) return out;

  double check = 0;
  for (const auto& [_, v] : alloc.phi) check += v;
  if (std::abs(check - game.value((1u << n) - 1)) > 1e-9) {
    throw SimFault("allocation does not cover the grand-coalition value");
  }

  // Physical energy, pro-rata on both sides.
  std::vector<double> covered(n, 0.0), drawn(n, 0.0);
  for (int i = 0; i < n; ++i) {
    covered[i] = traded * game.deficit[i] / total_deficit;
    drawn[i] = traded * game.surplus[i] / total_surplus;
  }
  for (int b = 0; b < n; ++b) {
    if (covered[b] <= 0) continue;
    const double pay_total = game.penalty_rate * covered[b] - alloc.phi.at(game.players[b]);
    out.bought_kwh[game.players[b]] = quantize_energy(covered[b]);
    for (int s = 0; s < n; ++s) {
      if (drawn[s] <= 0) continue;
      const double q = quantize_energy(covered[b] * drawn[s] / traded);
      if (q <= 0) continue;
      VppTrade t;
      t.seller = game.players[s];
      t.buyer = game.players[b];
      t.slot = game.slot;
      t.quantity_kwh = q;
      t.payment = quantize_money(pay_total * (drawn[s] / traded));
      out.trades.push_back(std::move(t));
      out.sold_kwh[game.players[s]] += q;
    }
  }
  for (auto& [_, v] : out.sold_kwh) v = quantize_energy(v);

  // Money: deficit players pay (gross gain - phi), surplus players receive
  // exactly phi.  Settle net balances from debtors to creditors in id order.
  std::vector<std::pair<VppId, double>> net;  // positive = receives
  for (int i = 0; i < n; ++i) {
    double cash = 0;
    if (covered[i] > 0) cash -= game.penalty_rate * covered[i] - alloc.phi.at(game.players[i]);
    if (drawn[i] > 0) cash += alloc.phi.at(game.players[i]);
    net.emplace_back(game.players[i], quantize_money(cash));
  }
  // Per-player quantization can leave a nano-dollar residual; park it on the
  // largest balance so the pool closes exactly.
  double residual = 0;
  std::size_t widest = 0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    residual += net[i].second;
    if (std::abs(net[i].second) > std::abs(net[widest].second)) widest = i;
  }
  net[widest].second = quantize_money(net[widest].second - residual);
  std::vector<std::pair<VppId, double>> debtors, creditors;
  for (const auto& [id, cash] : net) {
    if (cash < 0) debtors.emplace_back(id, -cash);
    if (cash > 0) creditors.emplace_back(id, cash);
  }
  std::size_t ci = 0;
  for (auto& [debtor, owes] : debtors) {
    while (owes > kMoneyQuantum / 2 && ci < creditors.size()) {
      const double amount = std::min(owes, creditors[ci].second);
      out.entries.push_back(LedgerEntry{game.slot.start, debtor.value, creditors[ci].first.value,
                                        quantize_money(amount), FlowReason::l3_transfer});
      owes = quantize_money(owes - amount);
      creditors[ci].second = quantize_money(creditors[ci].second - amount);
      if (creditors[ci].second <= kMoneyQuantum / 2) ++ci;
    }
  }
  return out;
}

}  // namespace temsim
