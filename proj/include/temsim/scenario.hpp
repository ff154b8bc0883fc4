#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "temsim/powerflow.hpp"
#include "temsim/prosumer.hpp"
#include "temsim/time_grid.hpp"
#include "temsim/units.hpp"
#include "temsim/vpp.hpp"

namespace temsim {

struct ProsumerConfig {
  AgentId id;
  FeederId feeder;
  std::string node;
  StorageParams storage;
  double initial_soc_kwh = 0;
  std::vector<double> demand_kwh;      // per L1 slot
  std::vector<double> generation_kwh;  // per L1 slot
  std::optional<double> p2p_sell_cap_kwh;
  std::optional<double> p2p_buy_cap_kwh;
  std::optional<double> demand_sigma;      // overrides noise.sigma
  std::optional<double> generation_sigma;  // overrides noise.sigma
};

struct FeatureFlags {
  bool p2p_enabled = true;
  bool price_game_enabled = true;
  bool vpp_enabled = true;
  bool l3_enabled = true;
  bool powerflow_enabled = true;
};

struct AncillarySeries {
  std::vector<double> clearing_price;  // per L2 slot
  std::vector<double> capacity_kwh;    // per L2 slot
  double penalty_multiplier = 2.0;     // penalty rate = multiplier * clearing price
};

struct PriceConfig {
  std::vector<double> utility_buy;        // per L1 slot, retail
  std::vector<double> net_metering_sell;  // per L1 slot
  std::vector<double> p2p_sell_ref;       // per L1 slot, planning reference
  std::vector<double> p2p_buy_ref;
  double price_grid_step = 0.01;
};

struct Scenario {
  int horizon_minutes = 0;
  std::uint64_t seed = 0;
  FeatureFlags flags;
  int mpc_horizon_slots = 24;  // 12 hours of 30-minute slots
  PriceConfig prices;
  double noise_sigma = 0;  // default relative sigma for demand and generation
  std::vector<FeederModel> feeders;
  std::vector<ProsumerConfig> prosumers;
  std::vector<VppConfig> vpps;
  AncillarySeries ancillary;
  TimeGrid grid;  // derived

  const FeederModel& feeder(const FeederId& id) const {
    for (const auto& f : feeders) {
      if (f.id == id) return f;
    }
    throw ValidationError("unknown feeder " + id.value);
  }

  double demand_sigma_of(const ProsumerConfig& p) const {
    return p.demand_sigma.value_or(noise_sigma);
  }
  double generation_sigma_of(const ProsumerConfig& p) const {
    return p.generation_sigma.value_or(noise_sigma);
  }
};

namespace detail {

inline double get_num(const nlohmann::json& j, const std::string& key, const std::string& where,
                      std::optional<double> fallback = std::nullopt) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ValidationError(where + ": missing required field '" + key + "'");
  }
  if (!j.at(key).is_number()) {
    throw ValidationError(where + "." + key + ": expected a number");
  }
  return j.at(key).get<double>();
}

inline std::vector<double> get_series(const nlohmann::json& j, const std::string& key,
                                      const std::string& where, std::size_t expected,
                                      bool required = true) {
  if (!j.contains(key)) {
    if (!required) return {};
    throw ValidationError(where + ": missing required series '" + key + "'");
  }
  if (!j.at(key).is_array()) throw ValidationError(where + "." + key + ": expected an array");
  std::vector<double> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_number()) throw ValidationError(where + "." + key + ": non-numeric entry");
    out.push_back(v.get<double>());
  }
  if (out.size() != expected) {
    throw ValidationError(where + "." + key + ": expected " + std::to_string(expected) +
                          " entries, got " + std::to_string(out.size()));
  }
  return out;
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
  using detail::get_num;
  using detail::get_series;

  Scenario sc;
  sc.horizon_minutes = static_cast<int>(get_num(j, "horizon_minutes", "scenario"));
  sc.grid = make_time_grid(sc.horizon_minutes);
  const std::size_t n1 = sc.grid.l1.size();
  const std::size_t n2 = sc.grid.l2.size();

  sc.seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : 0;

  if (j.contains("flags")) {
    const auto& f = j.at("flags");
    sc.flags.p2p_enabled = f.value("p2p_enabled", true);
    sc.flags.price_game_enabled = f.value("price_game_enabled", true);
    sc.flags.vpp_enabled = f.value("vpp_enabled", true);
    sc.flags.l3_enabled = f.value("l3_enabled", true);
    sc.flags.powerflow_enabled = f.value("powerflow_enabled", true);
  }

  if (j.contains("mpc")) {
    sc.mpc_horizon_slots = static_cast<int>(get_num(j.at("mpc"), "horizon_slots", "mpc", 24.0));
    if (sc.mpc_horizon_slots < 1) throw ValidationError("mpc.horizon_slots must be at least 1");
  }

  if (!j.contains("prices")) throw ValidationError("scenario: missing 'prices' section");
  const auto& pj = j.at("prices");
  sc.prices.utility_buy = get_series(pj, "utility_buy", "prices", n1);
  sc.prices.net_metering_sell = get_series(pj, "net_metering_sell", "prices", n1);
  sc.prices.price_grid_step = get_num(pj, "price_grid_step", "prices", 0.01);
  if (sc.prices.price_grid_step <= 0) throw ValidationError("prices.price_grid_step must be positive");
  for (std::size_t t = 0; t < n1; ++t) {
    const double nm = sc.prices.net_metering_sell[t];
    const double retail = sc.prices.utility_buy[t];
    if (nm < 0 || retail < 0) {
      throw ValidationError("prices: negative price at slot index " + std::to_string(t));
    }
    if (!(nm < retail)) {
      throw ValidationError("prices: net metering must stay below retail (slot index " +
                            std::to_string(t) + ")");
    }
  }
  if (pj.contains("p2p_sell_ref")) {
    sc.prices.p2p_sell_ref = get_series(pj, "p2p_sell_ref", "prices", n1);
  } else {
    for (std::size_t t = 0; t < n1; ++t) {
      sc.prices.p2p_sell_ref.push_back(
          (sc.prices.net_metering_sell[t] + sc.prices.utility_buy[t]) / 2.0);
    }
  }
  if (pj.contains("p2p_buy_ref")) {
    sc.prices.p2p_buy_ref = get_series(pj, "p2p_buy_ref", "prices", n1);
  } else {
    sc.prices.p2p_buy_ref = sc.prices.p2p_sell_ref;
  }

  if (!j.contains("feeders") || !j.at("feeders").is_array() || j.at("feeders").empty()) {
    throw ValidationError("scenario: at least one feeder is required");
  }
  std::set<std::string> feeder_ids;
  for (const auto& fj : j.at("feeders")) {
    FeederModel fm;
    fm.id = FeederId{fj.value("id", "")};
    if (fm.id.value.empty()) throw ValidationError("feeders[]: missing id");
    if (!feeder_ids.insert(fm.id.value).second) {
      throw ValidationError("feeders: duplicate id " + fm.id.value);
    }
    const std::string where = "feeders." + fm.id.value;
    fm.v_source_pu = get_num(fj, "v_source_pu", where, 1.0);
    fm.v_min_pu = get_num(fj, "v_min_pu", where, 0.95);
    fm.v_max_pu = get_num(fj, "v_max_pu", where, 1.05);
    fm.base_mva = get_num(fj, "base_mva", where, 1.0);
    if (!(fm.base_mva > 0)) throw ValidationError(where + ": base_mva must be positive");
    if (!(0 < fm.v_min_pu && fm.v_min_pu < fm.v_max_pu)) {
      throw ValidationError(where + ": voltage band must satisfy 0 < v_min < v_max");
    }
    if (!fj.contains("nodes") || !fj.at("nodes").is_array() || fj.at("nodes").empty()) {
      throw ValidationError(where + ": nodes array required");
    }
    std::map<std::string, int> node_index;
    for (const auto& nj : fj.at("nodes")) {
      FeederNode node;
      node.id = nj.value("id", "");
      if (node.id.empty()) throw ValidationError(where + ".nodes[]: missing id");
      if (node_index.count(node.id)) {
        throw ValidationError(where + ": duplicate node id " + node.id);
      }
      node.r_pu = get_num(nj, "r_pu", where + ".nodes." + node.id, 0.0);
      node.x_pu = get_num(nj, "x_pu", where + ".nodes." + node.id, 0.0);
      node_index[node.id] = static_cast<int>(fm.nodes.size());
      fm.nodes.push_back(std::move(node));
    }
    int k = 0;
    for (const auto& nj : fj.at("nodes")) {
      if (nj.contains("parent") && !nj.at("parent").is_null()) {
        const std::string parent = nj.at("parent").get<std::string>();
        if (!node_index.count(parent)) {
          throw ValidationError(where + ".nodes." + fm.nodes[k].id + ": unknown parent node '" +
                                parent + "'");
        }
        fm.nodes[k].parent = node_index.at(parent);
      }
      ++k;
    }
    fm.validate();
    sc.feeders.push_back(std::move(fm));
  }

  if (!j.contains("prosumers") || !j.at("prosumers").is_array()) {
    throw ValidationError("scenario: 'prosumers' array required");
  }
  std::set<std::string> agent_ids;
  for (const auto& aj : j.at("prosumers")) {
    ProsumerConfig pc;
    pc.id = AgentId{aj.value("id", "")};
    if (pc.id.value.empty()) throw ValidationError("prosumers[]: missing id");
    if (pc.id.value == kUtilityName || pc.id.value == kIsoName) {
      throw ValidationError("prosumers: id '" + pc.id.value + "' is reserved");
    }
    if (!agent_ids.insert(pc.id.value).second) {
      throw ValidationError("prosumers: duplicate id " + pc.id.value);
    }
    const std::string where = "prosumers." + pc.id.value;
    pc.feeder = FeederId{aj.value("feeder", "")};
    bool feeder_ok = feeder_ids.count(pc.feeder.value) > 0;
    if (!feeder_ok) {
      throw ValidationError(where + ": unknown feeder '" + pc.feeder.value + "'");
    }
    pc.node = aj.value("node", "");
    {
      bool node_ok = false;
      for (auto& fm : sc.feeders) {
        if (!(fm.id == pc.feeder)) continue;
        for (auto& n : fm.nodes) {
          if (n.id == pc.node) {
            n.agents.push_back(pc.id);
            node_ok = true;
          }
        }
      }
      if (!node_ok) {
        throw ValidationError(where + ": unknown node '" + pc.node + "' on feeder " +
                              pc.feeder.value);
      }
    }
    if (aj.contains("storage")) {
      const auto& st = aj.at("storage");
      pc.storage.capacity_kwh = get_num(st, "capacity_kwh", where + ".storage");
      pc.storage.charge_rate_kw = get_num(st, "charge_rate_kw", where + ".storage", 0.0);
      pc.storage.discharge_rate_kw = get_num(st, "discharge_rate_kw", where + ".storage", 0.0);
      pc.storage.charge_efficiency = get_num(st, "charge_efficiency", where + ".storage", 0.95);
      pc.storage.discharge_efficiency =
          get_num(st, "discharge_efficiency", where + ".storage", 0.95);
      pc.initial_soc_kwh = get_num(st, "soc_kwh", where + ".storage", 0.0);
      if (pc.storage.capacity_kwh < 0) {
        throw ValidationError(where + ".storage: capacity cannot be negative");
      }
      if (pc.storage.present()) {
        if (!(pc.storage.charge_rate_kw > 0) || !(pc.storage.discharge_rate_kw > 0)) {
          throw ValidationError(where + ".storage: rates must be positive when capacity > 0");
        }
        if (!(pc.storage.charge_efficiency > 0 && pc.storage.charge_efficiency <= 1.0) ||
            !(pc.storage.discharge_efficiency > 0 && pc.storage.discharge_efficiency <= 1.0)) {
          throw ValidationError(where + ".storage: efficiencies must lie in (0, 1]");
        }
        if (pc.initial_soc_kwh < 0 || pc.initial_soc_kwh > pc.storage.capacity_kwh) {
          throw ValidationError(where + ".storage: soc outside [0, capacity]");
        }
      } else if (pc.storage.charge_rate_kw != 0 || pc.storage.discharge_rate_kw != 0 ||
                 pc.initial_soc_kwh != 0) {
        throw ValidationError(where + ".storage: rates and soc must be zero without capacity");
      }
    }
    pc.demand_kwh = detail::get_series(aj, "demand_kwh", where, n1);
    pc.generation_kwh = detail::get_series(aj, "generation_kwh", where, n1);
    for (double v : pc.demand_kwh) {
      if (v < 0) throw ValidationError(where + ".demand_kwh: negative entry");
    }
    for (double v : pc.generation_kwh) {
      if (v < 0) throw ValidationError(where + ".generation_kwh: negative entry");
    }
    if (aj.contains("p2p_sell_cap_kwh")) pc.p2p_sell_cap_kwh = aj.at("p2p_sell_cap_kwh").get<double>();
    if (aj.contains("p2p_buy_cap_kwh")) pc.p2p_buy_cap_kwh = aj.at("p2p_buy_cap_kwh").get<double>();
    if (aj.contains("demand_sigma")) pc.demand_sigma = aj.at("demand_sigma").get<double>();
    if (aj.contains("generation_sigma")) pc.generation_sigma = aj.at("generation_sigma").get<double>();
    if (pc.demand_sigma.value_or(0) < 0 || pc.generation_sigma.value_or(0) < 0) {
      throw ValidationError(where + ": noise sigma cannot be negative");
    }
    sc.prosumers.push_back(std::move(pc));
  }

  if (!j.contains("vpps") || !j.at("vpps").is_array() || j.at("vpps").empty()) {
    throw ValidationError("scenario: at least one vpp is required");
  }
  std::set<std::string> vpp_ids;
  std::map<std::string, std::string> feeder_owner;
  for (const auto& vj : j.at("vpps")) {
    VppConfig vc;
    vc.id = VppId{vj.value("id", "")};
    if (vc.id.value.empty()) throw ValidationError("vpps[]: missing id");
    if (vc.id.value == kUtilityName || vc.id.value == kIsoName) {
      throw ValidationError("vpps: id '" + vc.id.value + "' is reserved");
    }
    if (!vpp_ids.insert(vc.id.value).second) {
      throw ValidationError("vpps: duplicate id " + vc.id.value);
    }
    const std::string where = "vpps." + vc.id.value;
    if (!vj.contains("feeders") || !vj.at("feeders").is_array() || vj.at("feeders").empty()) {
      throw ValidationError(where + ": nonempty feeders array required");
    }
    for (const auto& fid : vj.at("feeders")) {
      const std::string f = fid.get<std::string>();
      if (!feeder_ids.count(f)) throw ValidationError(where + ": unknown feeder '" + f + "'");
      if (feeder_owner.count(f)) {
        throw ValidationError(where + ": feeder '" + f + "' already belongs to " +
                              feeder_owner.at(f));
      }
      feeder_owner[f] = vc.id.value;
      vc.feeders.push_back(FeederId{f});
    }
    vc.safety_k = detail::get_num(vj, "safety_k", where, 1.0);
    vc.offer_discount = detail::get_num(vj, "offer_discount", where, 0.9);
    if (vc.safety_k < 0) throw ValidationError(where + ": safety_k cannot be negative");
    if (!(vc.offer_discount > 0 && vc.offer_discount <= 1.0)) {
      throw ValidationError(where + ": offer_discount must lie in (0, 1]");
    }
    sc.vpps.push_back(std::move(vc));
  }
  for (const auto& f : feeder_ids) {
    if (!feeder_owner.count(f)) {
      throw ValidationError("vpps: feeder '" + f + "' is not assigned to any vpp");
    }
  }

  if (!j.contains("ancillary")) throw ValidationError("scenario: missing 'ancillary' section");
  const auto& anj = j.at("ancillary");
  sc.ancillary.clearing_price = get_series(anj, "clearing_price", "ancillary", n2);
  sc.ancillary.capacity_kwh = get_series(anj, "capacity_kwh", "ancillary", n2);
  sc.ancillary.penalty_multiplier = get_num(anj, "penalty_multiplier", "ancillary", 2.0);
  for (double v : sc.ancillary.clearing_price) {
    if (v < 0) throw ValidationError("ancillary.clearing_price: negative entry");
  }
  for (double v : sc.ancillary.capacity_kwh) {
    if (v < 0) throw ValidationError("ancillary.capacity_kwh: negative entry");
  }
  if (sc.ancillary.penalty_multiplier < 0) {
    throw ValidationError("ancillary.penalty_multiplier cannot be negative");
  }

  if (j.contains("noise")) {
    sc.noise_sigma = detail::get_num(j.at("noise"), "sigma", "noise", 0.0);
    if (sc.noise_sigma < 0) throw ValidationError("noise.sigma cannot be negative");
  }

  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open scenario file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  try {
    return parse_scenario(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace temsim
