#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "temsim/exchange.hpp"
#include "temsim/lp.hpp"
#include "temsim/time_grid.hpp"
#include "temsim/units.hpp"

namespace temsim {

struct StorageParams {
  double capacity_kwh = 0;
  double charge_rate_kw = 0;
  double discharge_rate_kw = 0;
  double charge_efficiency = 0.95;
  double discharge_efficiency = 0.95;

  bool present() const { return capacity_kwh > 0; }
};

/// One microgrid's market-facing state.  Decision functions are pure: they
/// take the state and return plans/orders; mutation happens only through
/// roll_horizon.
struct ProsumerState {
  AgentId id;
  FeederId feeder;
  StorageParams storage;
  double soc_kwh = 0;
  std::vector<Contract> committed_contracts;  // binding trades for future slots
};

/// Demand and generation forecasts for the planning window, one value per
/// 30-minute slot.
struct ForecastSet {
  std::vector<double> demand_kwh;
  std::vector<double> generation_kwh;
};

/// The four price streams the dispatch objective trades against, one value
/// per slot of the window.
struct MpcPrices {
  std::vector<double> sell_p2p;
  std::vector<double> sell_net_metering;
  std::vector<double> buy_p2p;
  std::vector<double> buy_utility;
};

struct MpcOptions {
  double dt_hours = 0.5;  // slot length
  bool p2p_enabled = true;
  // Per-slot trade caps; when unset they default to the slot's forecast
  // surplus (sell) or deficit (buy), so the market never carries positions
  // the physical layer cannot deliver.
  std::optional<double> sell_p2p_cap_kwh;
  std::optional<double> buy_p2p_cap_kwh;
};

/// Rolling-horizon dispatch program for one prosumer.  Six decision vectors
/// per slot; commitments appear as lower bounds on the matching trade
/// variables.
struct MpcProblem {
  int horizon = 0;
  MarketSlot first_slot;  // delivery slot targeted by step 0
  AgentId agent;
  StorageParams storage;
  double soc0_kwh = 0;
  double dt_hours = 0.5;
  ForecastSet forecasts;
  MpcPrices prices;
  std::vector<double> sell_p2p_lower, buy_p2p_lower;
  std::vector<double> sell_p2p_upper, buy_p2p_upper;
  lp::Problem program;

  enum Var { kSellP2p = 0, kSellUtility, kBuyP2p, kBuyUtility, kCharge, kDischarge };
  int var(int t, Var kind) const { return 6 * t + static_cast<int>(kind); }
};

struct DispatchPlan {
  int horizon = 0;
  std::vector<double> sell_p2p, sell_utility, buy_p2p, buy_utility, charge, discharge;
  std::vector<double> soc_kwh;  // length horizon + 1
  double objective = 0;         // $
};

struct MpcOutcome {
  std::optional<DispatchPlan> plan;
  std::string infeasibility;  // names the violated slot/constraint when empty plan
};

inline MpcProblem build_mpc_problem(const ProsumerState& state, const ForecastSet& forecasts,
                                    const MpcPrices& prices, int horizon,
                                    const MarketSlot& first_slot, const MpcOptions& opt = {}) {
  if (horizon < 1) throw ValidationError("mpc horizon must be at least one slot");
  const auto need = static_cast<std::size_t>(horizon);
  if (forecasts.demand_kwh.size() < need || forecasts.generation_kwh.size() < need) {
    throw ValidationError("forecast series shorter than the mpc horizon");
  }
  for (const auto* series : {&prices.sell_p2p, &prices.sell_net_metering, &prices.buy_p2p,
                             &prices.buy_utility}) {
    if (series->size() < need) throw ValidationError("price series shorter than the mpc horizon");
  }
  if (state.soc_kwh < -kEnergyQuantum || state.soc_kwh > state.storage.capacity_kwh + kEnergyQuantum) {
    throw ValidationError("state of charge outside [0, capacity] for agent " + state.id.value);
  }

  MpcProblem mp;
  mp.horizon = horizon;
  mp.first_slot = first_slot;
  mp.agent = state.id;
  mp.storage = state.storage;
  mp.soc0_kwh = std::clamp(state.soc_kwh, 0.0, state.storage.capacity_kwh);
  mp.dt_hours = opt.dt_hours;
  mp.forecasts = forecasts;
  mp.prices = prices;
  mp.sell_p2p_lower.assign(need, 0.0);
  mp.buy_p2p_lower.assign(need, 0.0);
  mp.sell_p2p_upper.assign(need, 0.0);
  mp.buy_p2p_upper.assign(need, 0.0);

  // Binding commitments from already-cleared slots inside the window.
  for (const Contract& c : state.committed_contracts) {
    if (c.slot.layer != Layer::L1) continue;
    const int offset = (c.slot.start - first_slot.start) / layer_duration(Layer::L1);
    if (offset < 0 || offset >= horizon) continue;
    if (c.seller == state.id) mp.sell_p2p_lower[offset] += c.quantity_kwh;
    if (c.buyer == state.id) mp.buy_p2p_lower[offset] += c.quantity_kwh;
  }

  for (int t = 0; t < horizon; ++t) {
    const double surplus = std::max(0.0, forecasts.generation_kwh[t] - forecasts.demand_kwh[t]);
    const double deficit = std::max(0.0, forecasts.demand_kwh[t] - forecasts.generation_kwh[t]);
    double sell_cap = opt.p2p_enabled ? opt.sell_p2p_cap_kwh.value_or(surplus) : 0.0;
    double buy_cap = opt.p2p_enabled ? opt.buy_p2p_cap_kwh.value_or(deficit) : 0.0;
    if (!opt.p2p_enabled &&
        (mp.sell_p2p_lower[t] > 0 || mp.buy_p2p_lower[t] > 0)) {
      throw ValidationError("committed trades exist but peer trading is disabled for slot " +
                            std::to_string(first_slot.start + 30 * t));
    }
    // Commitments are binding regardless of the default cap.
    mp.sell_p2p_upper[t] = std::max(sell_cap, mp.sell_p2p_lower[t]);
    mp.buy_p2p_upper[t] = std::max(buy_cap, mp.buy_p2p_lower[t]);
  }

  lp::Problem& p = mp.program;
  const double charge_cap = state.storage.present() ? state.storage.charge_rate_kw * opt.dt_hours : 0.0;
  const double discharge_cap =
      state.storage.present() ? state.storage.discharge_rate_kw * opt.dt_hours : 0.0;

  for (int t = 0; t < horizon; ++t) {
    p.add_variable(prices.sell_p2p[t], mp.sell_p2p_lower[t], mp.sell_p2p_upper[t]);
    p.add_variable(prices.sell_net_metering[t], 0.0, lp::kInf);
    p.add_variable(-prices.buy_p2p[t], mp.buy_p2p_lower[t], mp.buy_p2p_upper[t]);
    p.add_variable(-prices.buy_utility[t], 0.0, lp::kInf);
    p.add_variable(0.0, 0.0, charge_cap);
    p.add_variable(0.0, 0.0, discharge_cap);
  }

  const double eta_c = state.storage.charge_efficiency;
  const double eta_d = state.storage.discharge_efficiency;

  for (int t = 0; t < horizon; ++t) {
    // generation + buys + discharge output = demand + sells + charge
    p.add_row(lp::Sense::eq, forecasts.demand_kwh[t] - forecasts.generation_kwh[t],
              {{mp.var(t, MpcProblem::kBuyP2p), 1.0},
               {mp.var(t, MpcProblem::kBuyUtility), 1.0},
               {mp.var(t, MpcProblem::kDischarge), eta_d},
               {mp.var(t, MpcProblem::kSellP2p), -1.0},
               {mp.var(t, MpcProblem::kSellUtility), -1.0},
               {mp.var(t, MpcProblem::kCharge), -1.0}},
              "energy balance at slot " + std::to_string(first_slot.start + 30 * t));
  }

  // Sales must be sourced from own generation or discharge output (the
  // buy-side twin follows from the balance row).  This also keeps the
  // program bounded when net-metering is priced above retail.
  for (int t = 0; t < horizon; ++t) {
    p.add_row(lp::Sense::le, forecasts.generation_kwh[t],
              {{mp.var(t, MpcProblem::kSellP2p), 1.0},
               {mp.var(t, MpcProblem::kSellUtility), 1.0},
               {mp.var(t, MpcProblem::kDischarge), -eta_d}},
              "sell limit at slot " + std::to_string(first_slot.start + 30 * t));
  }

  // State of charge stays inside [0, capacity]; soc_k is affine in the
  // charge/discharge prefix, so no extra variables are needed.
  for (int k = 1; k <= horizon; ++k) {
    std::vector<std::pair<int, double>> prefix;
    prefix.reserve(2 * k);
    for (int t = 0; t < k; ++t) {
      prefix.push_back({mp.var(t, MpcProblem::kCharge), eta_c});
      prefix.push_back({mp.var(t, MpcProblem::kDischarge), -1.0});
    }
    const std::string at = std::to_string(first_slot.start + 30 * k);
    p.add_row(lp::Sense::le, state.storage.capacity_kwh - mp.soc0_kwh, prefix,
              "storage ceiling before slot " + at);
    p.add_row(lp::Sense::ge, -mp.soc0_kwh, std::move(prefix), "storage floor before slot " + at);
  }

  return mp;
}

/// Plain objective evaluation of a plan against the four price streams.
inline double objective_value(const DispatchPlan& plan, const MpcPrices& prices) {
  const auto n = static_cast<std::size_t>(plan.horizon);
  if (prices.sell_p2p.size() < n || prices.sell_net_metering.size() < n ||
      prices.buy_p2p.size() < n || prices.buy_utility.size() < n) {
    throw ValidationError("price series shorter than the plan horizon");
  }
  double j = 0;
  for (std::size_t t = 0; t < n; ++t) {
    j += prices.sell_p2p[t] * plan.sell_p2p[t] + prices.sell_net_metering[t] * plan.sell_utility[t] -
         prices.buy_p2p[t] * plan.buy_p2p[t] - prices.buy_utility[t] * plan.buy_utility[t];
  }
  return j;
}

inline MpcOutcome solve_mpc(const MpcProblem& mp) {
  MpcOutcome out;

  // The utility meter nets flow: selling at net-metering and buying at
  // retail cannot coexist within a slot.  When retail exceeds net-metering
  // the optimum nets by itself; otherwise branch the affected slots with one
  // side fixed to zero and keep the best branch.
  std::vector<int> ambiguous;
  for (int t = 0; t < mp.horizon; ++t) {
    if (mp.prices.sell_net_metering[t] >= mp.prices.buy_utility[t]) ambiguous.push_back(t);
  }
  if (ambiguous.size() > 12) {
    throw SimFault("net-metering priced at or above retail in " +
                   std::to_string(ambiguous.size()) + " slots; refusing to branch");
  }

  lp::Solution sol;
  sol.status = lp::Status::infeasible;
  for (std::uint32_t mask = 0; mask < (1u << ambiguous.size()); ++mask) {
    lp::Problem branch = mp.program;
    for (std::size_t i = 0; i < ambiguous.size(); ++i) {
      const int t = ambiguous[i];
      const int fixed = (mask >> i) & 1u ? mp.var(t, MpcProblem::kSellUtility)
                                         : mp.var(t, MpcProblem::kBuyUtility);
      branch.upper[fixed] = branch.lower[fixed];
    }
    const auto res = lp::solve(branch);
    if (res.status == lp::Status::unbounded) {
      throw SimFault("dispatch program unbounded for agent " + mp.agent.value +
                     " (check price inputs)");
    }
    if (res.status == lp::Status::optimal &&
        (sol.status != lp::Status::optimal || res.objective > sol.objective)) {
      sol = res;
    }
    if (sol.status != lp::Status::optimal && !res.blocking.empty() && sol.blocking.empty()) {
      sol.blocking = res.blocking;
    }
  }
  if (sol.status == lp::Status::infeasible) {
    out.infeasibility = sol.blocking.empty() ? "dispatch program infeasible" : sol.blocking;
    return out;
  }

  DispatchPlan plan;
  plan.horizon = mp.horizon;
  const int n = mp.horizon;
  plan.sell_p2p.resize(n);
  plan.sell_utility.resize(n);
  plan.buy_p2p.resize(n);
  plan.buy_utility.resize(n);
  plan.charge.resize(n);
  plan.discharge.resize(n);
  for (int t = 0; t < n; ++t) {
    plan.sell_p2p[t] = sol.x[mp.var(t, MpcProblem::kSellP2p)];
    plan.sell_utility[t] = sol.x[mp.var(t, MpcProblem::kSellUtility)];
    plan.buy_p2p[t] = sol.x[mp.var(t, MpcProblem::kBuyP2p)];
    plan.buy_utility[t] = sol.x[mp.var(t, MpcProblem::kBuyUtility)];
    plan.charge[t] = sol.x[mp.var(t, MpcProblem::kCharge)];
    plan.discharge[t] = sol.x[mp.var(t, MpcProblem::kDischarge)];
  }

  const double eta_c = mp.storage.charge_efficiency;
  const double eta_d = mp.storage.discharge_efficiency;

  // Simultaneous charge/discharge only survives the LP at degenerate optima.
  // With unit efficiencies the two net exactly; otherwise reduce both at the
  // soc-preserving ratio and send the freed energy to net metering, which
  // never lowers the objective.
  for (int t = 0; t < n; ++t) {
    double& ch = plan.charge[t];
    double& dis = plan.discharge[t];
    if (ch <= kEnergyQuantum || dis <= kEnergyQuantum) continue;
    if (eta_c == 1.0 && eta_d == 1.0) {
      const double m = std::min(ch, dis);
      ch -= m;
      dis -= m;
    } else {
      const double d_dis = std::min(dis, eta_c * ch);
      const double d_ch = d_dis / eta_c;
      ch -= d_ch;
      dis -= d_dis;
      plan.sell_utility[t] += d_ch - eta_d * d_dis;
    }
  }

  // Close each slot's balance exactly; simplex residuals are ~1e-12 but the
  // balance contract is 1e-9 and downstream accounting assumes exact zero.
  for (int t = 0; t < n; ++t) {
    const double residual = mp.forecasts.generation_kwh[t] + plan.buy_p2p[t] + plan.buy_utility[t] +
                            eta_d * plan.discharge[t] - mp.forecasts.demand_kwh[t] -
                            plan.sell_p2p[t] - plan.sell_utility[t] - plan.charge[t];
    if (residual > 0) {
      plan.sell_utility[t] += residual;
    } else if (residual < 0) {
      plan.buy_utility[t] -= residual;
    }
  }

  plan.soc_kwh.assign(n + 1, mp.soc0_kwh);
  for (int t = 0; t < n; ++t) {
    plan.soc_kwh[t + 1] =
        std::clamp(plan.soc_kwh[t] + eta_c * plan.charge[t] - plan.discharge[t], 0.0,
                   mp.storage.capacity_kwh);
  }
  plan.objective = objective_value(plan, mp.prices);
  out.plan = std::move(plan);
  return out;
}

/// Battery actuals for one completed slot.
struct SlotMeasurements {
  double charge_kwh = 0;
  double discharge_kwh = 0;
};

/// Advances the state past a completed slot: state of charge follows the
/// measured battery action, expired contracts fall off.
inline ProsumerState roll_horizon(ProsumerState state, const MarketSlot& completed,
                                  const SlotMeasurements& measured) {
  const double eta_c = state.storage.charge_efficiency;
  double soc = state.soc_kwh + eta_c * measured.charge_kwh - measured.discharge_kwh;
  if (soc < -1e-9 || soc > state.storage.capacity_kwh + 1e-9) {
    throw SimFault("measured state of charge " + std::to_string(soc) + " outside [0, " +
                   std::to_string(state.storage.capacity_kwh) + "] for agent " + state.id.value +
                   " after slot " + std::to_string(completed.start));
  }
  state.soc_kwh = std::clamp(soc, 0.0, state.storage.capacity_kwh);
  std::erase_if(state.committed_contracts,
                [&](const Contract& c) { return c.slot.end() <= completed.end(); });
  return state;
}

/// Turns the first step of a plan into feeder-market orders at the strategy
/// price.  At most one sell and one buy order; both present is legal but
/// flagged upstream as a wash-trade warning.
inline std::vector<Order> plan_to_orders(const DispatchPlan& plan, const AgentId& agent,
                                         const FeederId& feeder, const MarketSlot& next_slot,
                                         double strategy_price, int now_minutes) {
  std::vector<Order> orders;
  if (plan.horizon < 1) return orders;
  const double sell = quantize_energy(plan.sell_p2p[0]);
  const double buy = quantize_energy(plan.buy_p2p[0]);
  if (sell > 0) {
    orders.push_back(Order{agent, feeder, next_slot, Side::sell, sell, strategy_price, now_minutes});
  }
  if (buy > 0) {
    orders.push_back(Order{agent, feeder, next_slot, Side::buy, buy, strategy_price, now_minutes});
  }
  return orders;
}

}  // namespace temsim
