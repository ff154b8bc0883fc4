#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "temsim/exchange.hpp"
#include "temsim/units.hpp"

namespace temsim {

/// Discrete strategy space for limit prices, spanning the band where peer
/// trading beats the utility for both sides: [net-metering, retail].
struct PriceGrid {
  double floor = 0;
  double ceiling = 0;
  double step = 0.01;

  void validate() const {
    if (!(floor < ceiling)) throw ValidationError("price grid floor must be below ceiling");
    if (!(step > 0)) throw ValidationError("price grid step must be positive");
    if (size() > 10000) throw ValidationError("price grid exceeds 10000 points");
  }

  int size() const { return static_cast<int>(std::floor((ceiling - floor) / step + 1e-9)) + 1; }
  double price_at(int idx) const { return floor + step * idx; }
  int midpoint_index() const { return (size() - 1) / 2; }
};

/// One market participant in the slot's price game.  Quantities come from
/// the dispatch plans and are not strategic; only prices are.  Non-strategic
/// players keep their fixed price through best-response iteration.
struct GamePlayer {
  AgentId id;
  Side side = Side::sell;
  double quantity_kwh = 0;
  bool strategic = true;
  double fixed_price = 0;
};

using StrategyProfile = std::map<AgentId, double>;

/// Per-agent payoff of one strategy profile, evaluated through the actual
/// matching rule: sellers earn contract revenue, buyers earn their spread
/// against the retail price.  Unmatched demand falls back to the utility and
/// contributes zero by construction.
inline std::map<AgentId, double> payoff(const StrategyProfile& profile,
                                        const std::vector<GamePlayer>& players,
                                        double utility_buy_price, const MarketSlot& slot,
                                        const FeederId& feeder) {
  std::vector<Order> orders;
  std::map<AgentId, double> result;
  for (const GamePlayer& pl : players) {
    const auto it = profile.find(pl.id);
    if (it == profile.end()) {
      throw ValidationError("player " + pl.id.value + " missing from strategy profile");
    }
    result[pl.id] = 0.0;
    if (pl.quantity_kwh <= 0) continue;
    orders.push_back(Order{pl.id, feeder, slot, pl.side, pl.quantity_kwh, it->second,
                           slot.start - 30});
  }
  long seq = 0;
  const auto res = match_orders(orders, slot, feeder, seq);
  for (const Contract& c : res.contracts) {
    result[c.seller] += c.quantity_kwh * c.price;
    result[c.buyer] += c.quantity_kwh * (utility_buy_price - c.price);
  }
  return result;
}

/// Best grid price for one player holding everyone else fixed; ties resolve
/// to the lowest price.
inline double best_response(const AgentId& player, const StrategyProfile& profile,
                            const std::vector<GamePlayer>& players, const PriceGrid& grid,
                            double utility_buy_price, const MarketSlot& slot,
                            const FeederId& feeder) {
  grid.validate();
  StrategyProfile trial = profile;
  double best_price = grid.price_at(0);
  double best_value = -1e300;
  for (int i = 0; i < grid.size(); ++i) {
    trial[player] = grid.price_at(i);
    const auto pay = payoff(trial, players, utility_buy_price, slot, feeder);
    const double v = pay.at(player);
    if (v > best_value + 1e-12) {
      best_value = v;
      best_price = grid.price_at(i);
    }
  }
  return best_price;
}

struct NashResult {
  StrategyProfile profile;
  bool converged = false;
  int rounds = 0;
};

/// Best-response iteration over ascending agent ids from an all-midpoint
/// start.  A fixed point is verified against every unilateral grid deviation
/// before it is reported as an equilibrium; repeated non-fixed profiles mean
/// a cycle, which falls back to midpoint pricing with converged=false.
inline NashResult find_nash(const std::vector<GamePlayer>& players, const PriceGrid& grid,
                            double utility_buy_price, const MarketSlot& slot,
                            const FeederId& feeder, int max_rounds = 100) {
  NashResult out;
  if (players.empty()) {
    out.converged = true;
    return out;
  }
  grid.validate();
  if (max_rounds < 1) throw ValidationError("max_rounds must be at least 1");

  std::vector<GamePlayer> ordered = players;
  std::sort(ordered.begin(), ordered.end(),
            [](const GamePlayer& a, const GamePlayer& b) { return a.id < b.id; });

  StrategyProfile profile;
  const double start_price = grid.price_at(grid.midpoint_index());
  for (const auto& pl : ordered) profile[pl.id] = pl.strategic ? start_price : pl.fixed_price;

  auto fallback = [&] {
    NashResult fb;
    for (const auto& pl : ordered) fb.profile[pl.id] = pl.strategic ? start_price : pl.fixed_price;
    fb.converged = false;
    return fb;
  };

  auto key_of = [&](const StrategyProfile& p) {
    std::vector<double> key;
    key.reserve(p.size());
    for (const auto& [_, v] : p) key.push_back(v);
    return key;
  };

  std::set<std::vector<double>> seen;
  seen.insert(key_of(profile));

  for (int round = 1; round <= max_rounds; ++round) {
    out.rounds = round;
    bool changed = false;
    for (const auto& pl : ordered) {
      if (!pl.strategic) continue;
      const double br =
          best_response(pl.id, profile, ordered, grid, utility_buy_price, slot, feeder);
      if (br != profile[pl.id]) changed = true;
      profile[pl.id] = br;
    }
    if (!changed) {
      // Explicit equilibrium check across the whole grid before reporting.
      const auto base = payoff(profile, ordered, utility_buy_price, slot, feeder);
      for (const auto& pl : ordered) {
        if (!pl.strategic) continue;
        StrategyProfile trial = profile;
        for (int i = 0; i < grid.size(); ++i) {
          trial[pl.id] = grid.price_at(i);
          const auto pay = payoff(trial, ordered, utility_buy_price, slot, feeder);
          if (pay.at(pl.id) > base.at(pl.id) + 1e-9) return fallback();
        }
      }
      out.profile = profile;
      out.converged = true;
      return out;
    }
    if (!seen.insert(key_of(profile)).second) return fallback();  // cycle
  }
  return fallback();
}

}  // namespace temsim
