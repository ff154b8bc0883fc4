#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "temsim/ancillary.hpp"
#include "temsim/coop_market.hpp"
#include "temsim/events.hpp"
#include "temsim/exchange.hpp"
#include "temsim/ledger.hpp"
#include "temsim/powerflow.hpp"
#include "temsim/price_game.hpp"
#include "temsim/prosumer.hpp"
#include "temsim/rng.hpp"
#include "temsim/scenario.hpp"
#include "temsim/vpp.hpp"

namespace temsim {

/// Multiplicative truncated-at-zero noise from the (agent, slot) substream.
inline double realize(double forecast_kwh, double sigma_rel, RngStream& stream) {
  if (forecast_kwh < 0) throw ValidationError("forecast cannot be negative");
  if (forecast_kwh == 0.0) return 0.0;
  if (sigma_rel == 0.0) return forecast_kwh;
  const double eps = sigma_rel * stream.next_normal();
  return std::max(0.0, forecast_kwh * (1.0 + eps));
}

struct NashFlag {
  int slot_start = 0;
  FeederId feeder;
  bool converged = true;
  int rounds = 0;
};

struct WashWarning {
  int slot_start = 0;
  AgentId agent;
};

struct AncillaryRow {
  int slot_start = 0;
  VppId vpp;
  double bid_kwh = 0, offer_price = 0;
  double awarded_kwh = 0, clearing_price = 0;
  double delivered_kwh = 0, shortfall_kwh = 0;
  double revenue = 0, penalty = 0;
};

struct ViolationRow {
  int step_start = 0;
  FeederId feeder;
  std::string node;
  ViolationKind kind = ViolationKind::under_voltage;
  double v_pu = 0, excursion_pu = 0;
};

/// Per-slot energy account; the residual must vanish: generation + imports =
/// demand + net-metered exports + ancillary delivery + curtailment + the net
/// energy absorbed by storage at the point of interconnection.
struct EnergyRow {
  int slot_start = 0;
  double generation_kwh = 0, demand_kwh = 0;
  double utility_import_kwh = 0, utility_export_kwh = 0;
  double iso_delivered_kwh = 0, curtailed_kwh = 0, storage_net_kwh = 0;

  double residual() const {
    return generation_kwh + utility_import_kwh -
           (demand_kwh + utility_export_kwh + iso_delivered_kwh + curtailed_kwh +
            storage_net_kwh);
  }
};

struct RunReport {
  std::uint64_t seed = 0;
  FeatureFlags flags;
  SettlementLedger ledger;
  std::vector<Contract> contracts;
  std::vector<AncillaryRow> ancillary;
  std::vector<VppTrade> l3_trades;
  std::vector<ViolationRow> violations;
  std::vector<NashFlag> nash_flags;
  std::vector<WashWarning> wash_warnings;
  std::vector<EnergyRow> energy;
  std::map<AgentId, double> prosumer_cost;     // net $ outflow over the run
  std::map<AgentId, double> prosumer_savings;  // baseline cost - cost (run_with_baseline)
  std::map<VppId, double> vpp_revenue;
  std::map<VppId, double> vpp_penalty;
  double total_revenue = 0, total_penalty = 0, total_p2p_volume_kwh = 0;
  double total_deviation_paid = 0;  // $ magnitude of deviation-reason entries
};

namespace detail {

/// Splits a total across weights, quantized, with the residual parked on the
/// last positive share so the parts always sum back to the quantized total.
inline std::map<AgentId, double> split_prorata(double total,
                                               const std::map<AgentId, double>& weights,
                                               double quantum) {
  std::map<AgentId, double> out;
  double wsum = 0;
  for (const auto& [_, w] : weights) wsum += std::max(0.0, w);
  if (wsum <= 0 || total == 0.0) return out;
  auto q = [&](double v) { return std::round(v / quantum) * quantum; };
  double assigned = 0;
  AgentId last;
  for (const auto& [id, w] : weights) {
    if (w <= 0) continue;
    const double share = q(total * (w / wsum));
    out[id] = share;
    assigned += share;
    last = id;
  }
  if (!last.value.empty()) out[last] = q(out[last] + (q(total) - q(assigned)));
  return out;
}

}  // namespace detail

class Engine {
 public:
  explicit Engine(Scenario scenario) : sc_(std::move(scenario)) {
    for (const auto& p : sc_.prosumers) order_.push_back(p.id);
    std::sort(order_.begin(), order_.end());
  }

  RunReport run() {
    reset();
    const auto events = schedule_events(sc_.grid);
    for (const Event& ev : events) {
      try {
        dispatch(ev);
      } catch (const SimFault& e) {
        throw SimFault(std::string(event_name(ev.type)) + " at t=" + std::to_string(ev.time) +
                       " (slot " + std::to_string(ev.slot.start) + "): " + e.what());
      }
    }
    finalize();
    return std::move(report_);
  }

 private:
  struct SlotCommit {
    bool present = false;
    double sell_p2p = 0, sell_utility = 0, buy_p2p = 0, buy_utility = 0;
    double charge = 0, discharge = 0;
    double planned_net_export = 0;
  };

  struct ProsumerRt {
    const ProsumerConfig* cfg = nullptr;
    ProsumerState state;
    int settled_slots = 0;
    std::vector<SlotCommit> plans;  // indexed by L1 slot
  };

  struct FeederMarketRt {
    std::vector<Contract> contracts;
    OverspillReport overspill;
    std::map<AgentId, double> unmatched_sell;
  };

  struct L1Rt {
    std::map<FeederId, FeederMarketRt> feeders;
    bool realized_drawn = false;
    std::map<AgentId, double> realized_generation, realized_demand;
    std::map<AgentId, double> measured_export, curtailed;
    std::map<VppId, double> l3_cash;
  };

  struct VppL2Rt {
    double forecast = 0;  // sellable kWh for this 15-minute slot
    double sigma = 0;
    double bid_kwh = 0, offer_price = 0;
    std::optional<AncillaryAward> award;
    std::vector<double> measured_steps;
    std::map<FeederId, double> pool_by_feeder;
    std::map<FeederId, double> planned_by_feeder;  // per-l2 share of feeder overspill
    double sold = 0, bought = 0;
  };

  void reset() {
    report_ = RunReport{};
    report_.seed = sc_.seed;
    report_.flags = sc_.flags;
    prosumers_.clear();
    for (const auto& cfg : sc_.prosumers) {
      ProsumerRt rt;
      rt.cfg = &cfg;
      rt.state.id = cfg.id;
      rt.state.feeder = cfg.feeder;
      rt.state.storage = cfg.storage;
      rt.state.soc_kwh = cfg.initial_soc_kwh;
      rt.plans.assign(sc_.grid.l1.size(), SlotCommit{});
      prosumers_[cfg.id] = std::move(rt);
    }
    l1_.assign(sc_.grid.l1.size(), L1Rt{});
    l2_.assign(sc_.grid.l2.size(), {});
    next_contract_id_ = 1;
    pending_curtail_kw_.clear();
  }

  void dispatch(const Event& ev) {
    switch (ev.type) {
      case EventType::l1_clear: on_l1_clear(ev.slot); break;
      case EventType::l2_bid:
        if (sc_.flags.vpp_enabled) on_l2_bid(ev.slot);
        break;
      case EventType::l3_market:
        if (sc_.flags.vpp_enabled && sc_.flags.l3_enabled) on_l3_market(ev.slot);
        break;
      case EventType::deliver: on_deliver(ev.slot); break;
      case EventType::settle: on_settle(ev.slot); break;
    }
  }

  // ---- L1: rolling dispatch, price formation, matching -------------------

  void on_l1_clear(const MarketSlot& slot) {
    const int i1 = TimeGrid::index_of(Layer::L1, slot.start);
    const int total = static_cast<int>(sc_.grid.l1.size());
    const int horizon = std::min(sc_.mpc_horizon_slots, total - i1);
    L1Rt& rt1 = l1_[i1];
    for (const auto& fm : sc_.feeders) rt1.feeders[fm.id];  // ensure presence

    std::map<FeederId, std::vector<GamePlayer>> players_by_feeder;
    std::map<AgentId, SlotCommit*> commits;

    for (const AgentId& id : order_) {
      ProsumerRt& pr = prosumers_.at(id);
      const ProsumerConfig& cfg = *pr.cfg;

      ForecastSet fc;
      MpcPrices prices;
      for (int t = 0; t < horizon; ++t) {
        fc.demand_kwh.push_back(cfg.demand_kwh[i1 + t]);
        fc.generation_kwh.push_back(cfg.generation_kwh[i1 + t]);
        prices.sell_p2p.push_back(sc_.prices.p2p_sell_ref[i1 + t]);
        prices.sell_net_metering.push_back(sc_.prices.net_metering_sell[i1 + t]);
        prices.buy_p2p.push_back(sc_.prices.p2p_buy_ref[i1 + t]);
        prices.buy_utility.push_back(sc_.prices.utility_buy[i1 + t]);
      }

      ProsumerState planning = pr.state;
      planning.soc_kwh = projected_soc(pr, i1);

      MpcOptions opt;
      opt.p2p_enabled = sc_.flags.p2p_enabled;
      opt.sell_p2p_cap_kwh = cfg.p2p_sell_cap_kwh;
      opt.buy_p2p_cap_kwh = cfg.p2p_buy_cap_kwh;

      const auto problem = build_mpc_problem(planning, fc, prices, horizon, slot, opt);
      const auto outcome = solve_mpc(problem);
      if (!outcome.plan) {
        throw SimFault("dispatch infeasible for " + id.value + ": " + outcome.infeasibility);
      }
      const DispatchPlan& plan = *outcome.plan;

      SlotCommit& commit = pr.plans[i1];
      commit.present = true;
      commit.sell_p2p = quantize_energy(plan.sell_p2p[0]);
      commit.sell_utility = plan.sell_utility[0];
      commit.buy_p2p = quantize_energy(plan.buy_p2p[0]);
      commit.buy_utility = plan.buy_utility[0];
      commit.charge = plan.charge[0];
      commit.discharge = plan.discharge[0];
      commit.planned_net_export = commit.sell_p2p + commit.sell_utility - commit.buy_p2p -
                                  commit.buy_utility;
      commits[id] = &commit;

      if (commit.sell_p2p > 0) {
        players_by_feeder[cfg.feeder].push_back(GamePlayer{id, Side::sell, commit.sell_p2p});
      }
      if (commit.buy_p2p > 0) {
        players_by_feeder[cfg.feeder].push_back(GamePlayer{id, Side::buy, commit.buy_p2p});
      }
      if (commit.sell_p2p > 0 && commit.buy_p2p > 0) {
        report_.wash_warnings.push_back(WashWarning{slot.start, id});
      }
    }

    const PriceGrid grid{sc_.prices.net_metering_sell[i1], sc_.prices.utility_buy[i1],
                         sc_.prices.price_grid_step};
    const double retail = sc_.prices.utility_buy[i1];
    const double midpoint = grid.price_at(grid.midpoint_index());

    for (const auto& fm : sc_.feeders) {
      FeederMarketRt& market = rt1.feeders[fm.id];
      market.overspill.feeder = fm.id;
      market.overspill.slot = slot;

      StrategyProfile profile;
      const auto pit = players_by_feeder.find(fm.id);
      if (pit != players_by_feeder.end() && !pit->second.empty()) {
        if (sc_.flags.price_game_enabled) {
          const auto nash = find_nash(pit->second, grid, retail, slot, fm.id);
          profile = nash.profile;
          report_.nash_flags.push_back(NashFlag{slot.start, fm.id, nash.converged, nash.rounds});
          if (!nash.converged) {
            for (const auto& pl : pit->second) profile[pl.id] = midpoint;
          }
        } else {
          for (const auto& pl : pit->second) profile[pl.id] = midpoint;
        }

        std::vector<Order> orders;
        for (const AgentId& id : order_) {
          const auto cit = commits.find(id);
          if (cit == commits.end() || prosumers_.at(id).cfg->feeder != fm.id) continue;
          const SlotCommit& c = *cit->second;
          if (c.sell_p2p <= 0 && c.buy_p2p <= 0) continue;
          DispatchPlan stub;
          stub.horizon = 1;
          stub.sell_p2p = {c.sell_p2p};
          stub.buy_p2p = {c.buy_p2p};
          stub.sell_utility = {0};
          stub.buy_utility = {0};
          stub.charge = {0};
          stub.discharge = {0};
          stub.soc_kwh = {0, 0};
          const auto agent_orders =
              plan_to_orders(stub, id, fm.id, slot, profile.at(id), slot.start - 30);
          orders.insert(orders.end(), agent_orders.begin(), agent_orders.end());
        }

        auto result = match_orders(orders, slot, fm.id, next_contract_id_);
        market.contracts = std::move(result.contracts);
        market.overspill = result.overspill;

        for (const Order& o : orders) {
          if (o.side == Side::sell) market.unmatched_sell[o.agent] += o.quantity_kwh;
        }
        for (const Contract& c : market.contracts) {
          market.unmatched_sell[c.seller] -= c.quantity_kwh;
          report_.total_p2p_volume_kwh += c.quantity_kwh;
        }
        for (auto& [_, v] : market.unmatched_sell) v = std::max(0.0, quantize_energy(v));
        report_.contracts.insert(report_.contracts.end(), market.contracts.begin(),
                                 market.contracts.end());
      }
    }

    if (!sc_.flags.vpp_enabled) return;
    for (const auto& vc : sc_.vpps) {
      std::vector<OverspillReport> reports;
      for (const FeederId& f : vc.feeders) reports.push_back(rt1.feeders.at(f).overspill);
      const auto forecast = aggregate_overspill(reports);

      double var = 0;  // forecast error from member noise, per 15-minute slot
      for (const auto& cfg : sc_.prosumers) {
        if (prosumer_vpp(cfg.id) != vc.id) continue;
        const double sg = sc_.generation_sigma_of(cfg) * cfg.generation_kwh[i1] / 2.0;
        const double sd = sc_.demand_sigma_of(cfg) * cfg.demand_kwh[i1] / 2.0;
        var += sg * sg + sd * sd;
      }
      const double sigma = std::sqrt(var);

      for (int child = 0; child < 2; ++child) {
        const int i2 = 2 * i1 + child;
        VppL2Rt& rt2 = l2_[i2][vc.id];
        rt2.forecast = forecast.sellable_per_l2_kwh;
        rt2.sigma = sigma;
        for (const FeederId& f : vc.feeders) {
          rt2.planned_by_feeder[f] = std::max(0.0, rt1.feeders.at(f).overspill.net_kwh()) / 2.0;
        }
      }
    }
  }

  // ---- L2: aggregation bids into the exogenous reserve market ------------

  void on_l2_bid(const MarketSlot& slot) {
    const int i2 = TimeGrid::index_of(Layer::L2, slot.start);
    const int i1 = TimeGrid::index_of(Layer::L1, slot.start);
    const double clearing = sc_.ancillary.clearing_price[i2];
    const double capacity = sc_.ancillary.capacity_kwh[i2];
    const double nm = sc_.prices.net_metering_sell[i1];

    std::vector<AncillaryBid> bids;
    for (const auto& vc : sc_.vpps) {
      VppL2Rt& rt2 = l2_[i2][vc.id];
      if (rt2.forecast <= 0) continue;
      const auto bid = make_ancillary_bid(vc.id, slot, rt2.forecast, rt2.sigma, clearing,
                                          vc.safety_k, vc.offer_discount, nm);
      if (bid) {
        rt2.bid_kwh = bid->quantity_kwh;
        rt2.offer_price = bid->offer_price;
        bids.push_back(*bid);
      }
    }
    const auto awards = clear_bids(bids, slot, clearing, capacity);
    for (const auto& award : awards) l2_[i2][award.bid.vpp].award = award;
  }

  // ---- L3: cooperative balancing among aggregators ------------------------

  void on_l3_market(const MarketSlot& step) {
    const MarketSlot l2 = parent_slot(step);
    const int i2 = TimeGrid::index_of(Layer::L2, l2.start);
    const int i1 = TimeGrid::index_of(Layer::L1, l2.start);
    const double penalty_rate = sc_.ancillary.penalty_multiplier * sc_.ancillary.clearing_price[i2];
    if (penalty_rate <= 0) return;

    std::vector<VppPosition> positions;
    for (const auto& vc : sc_.vpps) {
      auto it = l2_[i2].find(vc.id);
      if (it == l2_[i2].end()) continue;
      VppL2Rt& rt2 = it->second;

      const int measured = static_cast<int>(rt2.measured_steps.size());
      const int remaining = 3 - measured;
      if (remaining <= 0) continue;
      // Latest forecast of the remainder: the most recent measured step rate
      // once one exists, the bid-time forecast before that, net of energy
      // already traded away or procured on this market.
      const double rate = measured > 0 ? rt2.measured_steps.back() : rt2.forecast / 3.0;
      const double remainder = rate * remaining - rt2.sold + rt2.bought;

      const double award_q = rt2.award ? rt2.award->awarded_kwh : 0.0;
      const auto projection = monitor_delivery(award_q, rt2.measured_steps, remainder);
      VppPosition pos;
      pos.vpp = vc.id;
      pos.slot = step;
      if (award_q > 0) {
        pos.deficit_kwh = l3_deficit_request(
            std::min(projection.shortfall_kwh, award_q - rt2.bought), remaining);
      }
      if (pos.deficit_kwh <= 0) {
        pos.surplus_kwh = quantize_energy(std::max(0.0, projection.projected_kwh - rt2.bought -
                                                            award_q));
      }
      if (pos.deficit_kwh > 0 || pos.surplus_kwh > 0) positions.push_back(pos);
    }

    const auto game = form_coalition(positions, penalty_rate, step);
    if (!game) return;
    const auto alloc = shapley_allocate(*game);
    auto outcome = execute_transfers(*game, alloc);
    for (const auto& e : outcome.entries) {
      report_.ledger.add(e.slot_start, e.payer, e.payee, e.amount, e.reason);
      l1_[i1].l3_cash[VppId{e.payer}] -= e.amount;
      l1_[i1].l3_cash[VppId{e.payee}] += e.amount;
    }
    for (const auto& [vpp, q] : outcome.bought_kwh) l2_[i2][vpp].bought += q;
    for (const auto& [vpp, q] : outcome.sold_kwh) l2_[i2][vpp].sold += q;
    report_.l3_trades.insert(report_.l3_trades.end(), outcome.trades.begin(),
                             outcome.trades.end());
  }

  // ---- Delivery: realize noise, screen the feeders, measure ---------------

  void on_deliver(const MarketSlot& step) {
    const MarketSlot l1slot = parent_slot(parent_slot(step));
    const int i1 = TimeGrid::index_of(Layer::L1, l1slot.start);
    const int i2 = TimeGrid::index_of(Layer::L2, step.start);
    L1Rt& rt1 = l1_[i1];

    if (!rt1.realized_drawn) {
      for (const AgentId& id : order_) {
        const ProsumerConfig& cfg = *prosumers_.at(id).cfg;
        auto gstream = substream(sc_.seed, "generation", id.value, l1slot.start);
        auto dstream = substream(sc_.seed, "demand", id.value, l1slot.start);
        rt1.realized_generation[id] =
            realize(cfg.generation_kwh[i1], sc_.generation_sigma_of(cfg), gstream);
        rt1.realized_demand[id] = realize(cfg.demand_kwh[i1], sc_.demand_sigma_of(cfg), dstream);
      }
      rt1.realized_drawn = true;
    }

    std::map<FeederId, double> feeder_deviation;
    std::map<AgentId, double> step_export_kwh;
    for (const AgentId& id : order_) {
      const ProsumerRt& pr = prosumers_.at(id);
      const ProsumerConfig& cfg = *pr.cfg;
      const SlotCommit& commit = pr.plans[i1];
      if (!commit.present) throw SimFault("no dispatch plan recorded for " + id.value);

      const double planned_step = commit.planned_net_export / 6.0;
      const double noise_step = ((rt1.realized_generation[id] - cfg.generation_kwh[i1]) -
                                 (rt1.realized_demand[id] - cfg.demand_kwh[i1])) /
                                6.0;
      double exported = planned_step + noise_step;
      double curtailed = 0;
      const auto cit = pending_curtail_kw_.find(id);
      if (cit != pending_curtail_kw_.end() && exported > 0) {
        curtailed = std::min(cit->second / 12.0, exported);  // kW hint over 5 minutes
        exported -= curtailed;
      }
      step_export_kwh[id] = exported;
      rt1.measured_export[id] += exported;
      rt1.curtailed[id] += curtailed;
      feeder_deviation[cfg.feeder] += exported - planned_step;
    }

    pending_curtail_kw_.clear();
    if (sc_.flags.powerflow_enabled) screen_feeders(step, step_export_kwh);

    if (!sc_.flags.vpp_enabled) return;
    for (const auto& vc : sc_.vpps) {
      VppL2Rt& rt2 = l2_[i2][vc.id];
      double pool_step = 0;
      for (const FeederId& f : vc.feeders) {
        const double planned_step_f =
            rt2.planned_by_feeder.count(f) ? rt2.planned_by_feeder.at(f) / 3.0 : 0.0;
        const double dev = feeder_deviation.count(f) ? feeder_deviation.at(f) : 0.0;
        const double delivered = std::clamp(planned_step_f + dev, 0.0, planned_step_f);
        rt2.pool_by_feeder[f] += delivered;
        pool_step += delivered;
      }
      rt2.measured_steps.push_back(pool_step);
    }
  }

  void screen_feeders(const MarketSlot& step, const std::map<AgentId, double>& step_export_kwh) {
    for (const auto& fm : sc_.feeders) {
      std::vector<NodePower> withdrawals(fm.nodes.size());
      std::map<AgentId, AgentPower> agent_power;
      bool any = false;
      for (std::size_t n = 0; n < fm.nodes.size(); ++n) {
        for (const AgentId& a : fm.nodes[n].agents) {
          const double kw = step_export_kwh.count(a) ? step_export_kwh.at(a) * 12.0 : 0.0;
          agent_power[a] = AgentPower{kw, 0.0};
          withdrawals[n].p_pu -= kw / (fm.base_mva * 1000.0);
          any = any || kw != 0.0;
        }
      }
      if (!any) continue;
      const auto result = run_lindistflow(fm, withdrawals);
      const auto violations = check_limits(result, fm);
      if (violations.empty()) continue;
      for (const auto& v : violations) {
        report_.violations.push_back(
            ViolationRow{step.start, fm.id, v.node_id, v.kind, v.v_pu, v.excursion_pu});
      }
      for (const auto& sig : corrective_signals(violations, fm, agent_power)) {
        pending_curtail_kw_[sig.agent] += sig.real_kw;
      }
    }
  }

  // ---- Settlement: verification, penalties, money, rolling state ----------

  void on_settle(const MarketSlot& slot) {
    const int i1 = TimeGrid::index_of(Layer::L1, slot.start);
    L1Rt& rt1 = l1_[i1];
    const SlotTariffs tariffs{sc_.prices.utility_buy[i1], sc_.prices.net_metering_sell[i1]};

    std::map<AgentId, double> iso_planned, iso_delivered;
    if (sc_.flags.vpp_enabled) settle_vpps(slot, i1, rt1, iso_planned, iso_delivered);

    std::vector<Contract> contracts;
    std::map<AgentId, AgentSlotPosition> positions;
    for (const AgentId& id : order_) {
      const ProsumerRt& pr = prosumers_.at(id);
      const SlotCommit& commit = pr.plans[i1];
      AgentSlotPosition pos;
      pos.planned_net_export_kwh = commit.planned_net_export;
      pos.measured_net_export_kwh = rt1.measured_export.count(id) ? rt1.measured_export.at(id) : 0;
      pos.planned_iso_share_kwh = iso_planned.count(id) ? iso_planned.at(id) : 0;
      pos.delivered_iso_share_kwh = iso_delivered.count(id) ? iso_delivered.at(id) : 0;
      positions[id] = pos;
    }
    for (auto& [_, market] : rt1.feeders) {
      contracts.insert(contracts.end(), market.contracts.begin(), market.contracts.end());
    }
    for (const auto& e : settle_slot(contracts, positions, tariffs, slot)) {
      report_.ledger.add(e.slot_start, e.payer, e.payee, e.amount, e.reason);
      if (e.reason == FlowReason::deviation) report_.total_deviation_paid += e.amount;
    }

    EnergyRow energy;
    energy.slot_start = slot.start;
    for (const AgentId& id : order_) {
      const ProsumerRt& pr = prosumers_.at(id);
      const SlotCommit& commit = pr.plans[i1];
      const auto& pos = positions.at(id);
      energy.generation_kwh += rt1.realized_generation.count(id) ? rt1.realized_generation.at(id)
                                                                 : pr.cfg->generation_kwh[i1];
      energy.demand_kwh +=
          rt1.realized_demand.count(id) ? rt1.realized_demand.at(id) : pr.cfg->demand_kwh[i1];
      const double contracted_net = [&] {
        double c = 0;
        for (const auto& ct : contracts) {
          if (ct.seller == id) c += ct.quantity_kwh;
          if (ct.buyer == id) c -= ct.quantity_kwh;
        }
        return c;
      }();
      const double residual =
          pos.measured_net_export_kwh - contracted_net - pos.delivered_iso_share_kwh;
      if (residual > 0) {
        energy.utility_export_kwh += residual;
      } else {
        energy.utility_import_kwh += -residual;
      }
      energy.iso_delivered_kwh += pos.delivered_iso_share_kwh;
      energy.curtailed_kwh += rt1.curtailed.count(id) ? rt1.curtailed.at(id) : 0;
      energy.storage_net_kwh +=
          commit.charge - pr.state.storage.discharge_efficiency * commit.discharge;
    }
    report_.energy.push_back(energy);

    for (const AgentId& id : order_) {
      ProsumerRt& pr = prosumers_.at(id);
      const SlotCommit& commit = pr.plans[i1];
      pr.state =
          roll_horizon(pr.state, slot, SlotMeasurements{commit.charge, commit.discharge});
      pr.settled_slots = i1 + 1;
    }
  }

  void settle_vpps(const MarketSlot& slot, int i1, L1Rt& rt1,
                   std::map<AgentId, double>& iso_planned,
                   std::map<AgentId, double>& iso_delivered) {
    for (const auto& vc : sc_.vpps) {
      double cash = rt1.l3_cash.count(vc.id) ? rt1.l3_cash.at(vc.id) : 0.0;

      for (int child = 0; child < 2; ++child) {
        const int i2 = 2 * i1 + child;
        auto it = l2_[i2].find(vc.id);
        if (it == l2_[i2].end()) continue;
        VppL2Rt& rt2 = it->second;

        double pool = 0;
        for (double m : rt2.measured_steps) pool += m;

        double revenue = 0, penalty = 0, delivered_pay = 0, shortfall = 0;
        if (rt2.award) {
          const double own = std::max(0.0, pool - rt2.sold);
          const auto record = verify_delivery(*rt2.award, own, rt2.bought);
          const double rate =
              sc_.ancillary.penalty_multiplier * sc_.ancillary.clearing_price[i2];
          const auto assessed = assess_penalty(*rt2.award, record, rate);
          for (const auto& e : assessed.entries) {
            report_.ledger.add(e.slot_start, e.payer, e.payee, e.amount, e.reason);
          }
          revenue = assessed.revenue;
          penalty = assessed.penalty;
          delivered_pay = record.delivered_kwh;
          shortfall = record.shortfall_kwh;
          cash += revenue - penalty;
          report_.total_revenue += revenue;
          report_.total_penalty += penalty;
          report_.vpp_revenue[vc.id] += revenue;
          report_.vpp_penalty[vc.id] += penalty;
        }

        if (rt2.bid_kwh > 0 || rt2.award) {
          AncillaryRow row;
          row.slot_start = sc_.grid.l2[i2].start;
          row.vpp = vc.id;
          row.bid_kwh = rt2.bid_kwh;
          row.offer_price = rt2.offer_price;
          row.awarded_kwh = rt2.award ? rt2.award->awarded_kwh : 0;
          row.clearing_price = sc_.ancillary.clearing_price[i2];
          row.delivered_kwh = delivered_pay;
          row.shortfall_kwh = shortfall;
          row.revenue = revenue;
          row.penalty = penalty;
          report_.ancillary.push_back(row);
        }

        // Attribute ISO-bound energy back to the contributing prosumers.
        const double award_q = rt2.award ? rt2.award->awarded_kwh : 0.0;
        const double applied_own =
            std::clamp(pool - rt2.sold, 0.0, award_q);
        const double iso_used = applied_own + rt2.sold;
        double planned_total = 0;
        for (const auto& [_, v] : rt2.planned_by_feeder) planned_total += v;
        for (const FeederId& f : vc.feeders) {
          const auto& market = rt1.feeders.at(f);
          const double pool_f = rt2.pool_by_feeder.count(f) ? rt2.pool_by_feeder.at(f) : 0.0;
          const double used_f = pool > 0 ? iso_used * (pool_f / pool) : 0.0;
          const double planned_f =
              planned_total > 0 && award_q > 0
                  ? award_q * (rt2.planned_by_feeder.at(f) / planned_total)
                  : 0.0;
          if (used_f > 0) {
            for (const auto& [agent, share] :
                 detail::split_prorata(used_f, market.unmatched_sell, kEnergyQuantum)) {
              iso_delivered[agent] += share;
            }
          }
          if (planned_f > 0) {
            for (const auto& [agent, share] :
                 detail::split_prorata(planned_f, market.unmatched_sell, kEnergyQuantum)) {
              iso_planned[agent] += share;
            }
          }
        }
      }

      // Non-profit pass-through: market results flow to the prosumers whose
      // overspill backed them, pro-rata to contribution.
      if (cash != 0.0) {
        std::map<AgentId, double> weights;
        for (const FeederId& f : vc.feeders) {
          for (const auto& [agent, u] : rt1.feeders.at(f).unmatched_sell) weights[agent] += u;
        }
        const auto shares = detail::split_prorata(cash, weights, kMoneyQuantum);
        double passed = 0;
        for (const auto& [agent, share] : shares) {
          if (share > 0) {
            report_.ledger.add(slot.start, vc.id.value, agent.value, share,
                               FlowReason::ancillary_revenue);
          } else if (share < 0) {
            report_.ledger.add(slot.start, agent.value, vc.id.value, -share,
                               FlowReason::ancillary_penalty);
          }
          passed += share;
        }
        (void)passed;  // any unassigned remainder stays on the aggregator's books
      }
    }
  }

  void finalize() {
    const auto net = report_.ledger.net_by_party();
    for (const auto& cfg : sc_.prosumers) {
      const auto it = net.find(cfg.id.value);
      report_.prosumer_cost[cfg.id] = it != net.end() ? -it->second : 0.0;
    }
    for (const auto& vc : sc_.vpps) {
      report_.vpp_revenue[vc.id] += 0.0;
      report_.vpp_penalty[vc.id] += 0.0;
    }
  }

  double projected_soc(const ProsumerRt& pr, int i1) const {
    double soc = pr.state.soc_kwh;
    const auto& storage = pr.state.storage;
    for (int j = pr.settled_slots; j < i1; ++j) {
      const SlotCommit& c = pr.plans[j];
      if (!c.present) continue;
      soc = std::clamp(soc + storage.charge_efficiency * c.charge - c.discharge, 0.0,
                       storage.capacity_kwh);
    }
    return soc;
  }

  VppId prosumer_vpp(const AgentId& agent) const {
    const auto& cfg = [&]() -> const ProsumerConfig& {
      for (const auto& p : sc_.prosumers) {
        if (p.id == agent) return p;
      }
      throw ValidationError("unknown prosumer " + agent.value);
    }();
    for (const auto& vc : sc_.vpps) {
      for (const auto& f : vc.feeders) {
        if (f == cfg.feeder) return vc.id;
      }
    }
    throw ValidationError("feeder " + cfg.feeder.value + " belongs to no vpp");
  }

  Scenario sc_;
  RunReport report_;
  std::vector<AgentId> order_;
  std::map<AgentId, ProsumerRt> prosumers_;
  std::vector<L1Rt> l1_;
  std::vector<std::map<VppId, VppL2Rt>> l2_;
  std::map<AgentId, double> pending_curtail_kw_;
  long next_contract_id_ = 1;
};

inline RunReport run(const Scenario& scenario) { return Engine(scenario).run(); }

/// Utility-only counterfactual: peer trading, aggregation, and the secondary
/// market are disabled; dispatch still optimizes storage against the tariff.
inline Scenario baseline_scenario(Scenario scenario) {
  scenario.flags.p2p_enabled = false;
  scenario.flags.price_game_enabled = false;
  scenario.flags.vpp_enabled = false;
  scenario.flags.l3_enabled = false;
  return scenario;
}

inline RunReport baseline_run(const Scenario& scenario) {
  return run(baseline_scenario(scenario));
}

/// Full run with per-prosumer savings against the baseline.
inline RunReport run_with_baseline(const Scenario& scenario) {
  RunReport report = run(scenario);
  const RunReport base = baseline_run(scenario);
  for (const auto& [agent, cost] : report.prosumer_cost) {
    report.prosumer_savings[agent] = base.prosumer_cost.at(agent) - cost;
  }
  return report;
}

}  // namespace temsim
