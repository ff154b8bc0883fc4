#include <catch2/catch.hpp>

#include <string>

#include "temsim/scenario.hpp"

using namespace temsim;

namespace {
const std::string kScenarioDir = TEMSIM_SCENARIO_DIR;
const std::string kDataDir = TEMSIM_TEST_DATA_DIR;

nlohmann::json minimal_json() {
  return nlohmann::json::parse(R"({
    "horizon_minutes": 60,
    "seed": 7,
    "prices": {
      "utility_buy": [0.30, 0.30],
      "net_metering_sell": [0.05, 0.05],
      "price_grid_step": 0.01
    },
    "feeders": [
      {"id": "F1", "nodes": [
        {"id": "head", "r_pu": 0.0, "x_pu": 0.0},
        {"id": "n1", "parent": "head", "r_pu": 0.01, "x_pu": 0.005}
      ]}
    ],
    "prosumers": [
      {"id": "A", "feeder": "F1", "node": "n1",
       "demand_kwh": [0.5, 0.5], "generation_kwh": [1.0, 1.0]},
      {"id": "B", "feeder": "F1", "node": "n1",
       "demand_kwh": [1.0, 1.0], "generation_kwh": [0.0, 0.0]}
    ],
    "vpps": [{"id": "V1", "feeders": ["F1"], "safety_k": 0.0, "offer_discount": 0.9}],
    "ancillary": {
      "clearing_price": [0.12, 0.12, 0.12, 0.12],
      "capacity_kwh": [5, 5, 5, 5],
      "penalty_multiplier": 2.0
    },
    "noise": {"sigma": 0.0}
  })");
}
}  // namespace

TEST_CASE("scenario: minimal file parses with defaults") {
  const auto sc = parse_scenario(minimal_json());
  CHECK(sc.horizon_minutes == 60);
  CHECK(sc.grid.l1.size() == 2);
  CHECK(sc.grid.l3.size() == 12);
  CHECK(sc.seed == 7);
  CHECK(sc.mpc_horizon_slots == 24);
  CHECK(sc.flags.l3_enabled);
  CHECK(sc.prosumers.size() == 2);
  // default p2p reference prices sit mid-band
  CHECK(sc.prices.p2p_sell_ref[0] == Approx(0.175));
  // node attachment recorded for the feeder screen
  const auto& fm = sc.feeder(FeederId{"F1"});
  CHECK(fm.nodes[1].agents.size() == 2);
}

TEST_CASE("scenario: checked-in files are valid") {
  for (const char* name : {"desk.json", "desk_shortfall.json", "minimal.json",
                           "stress_feeder.json"}) {
    CHECK_NOTHROW(load_scenario(kScenarioDir + "/" + name));
  }
}

TEST_CASE("scenario: dangling feeder reference is located") {
  try {
    load_scenario(kDataDir + "/bad_dangling_feeder.json");
    FAIL("expected validation error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("P1") != std::string::npos);
    CHECK(msg.find("F9") != std::string::npos);
  }
}

TEST_CASE("scenario: series length mismatch is located") {
  try {
    load_scenario(kDataDir + "/bad_short_series.json");
    FAIL("expected validation error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("clearing_price") != std::string::npos);
    CHECK(msg.find("4") != std::string::npos);
  }
}

TEST_CASE("scenario: horizon must be a positive multiple of 30") {
  auto j = minimal_json();
  j["horizon_minutes"] = 45;
  CHECK_THROWS_AS(parse_scenario(j), ValidationError);
}

TEST_CASE("scenario: net metering must stay below retail") {
  auto j = minimal_json();
  j["prices"]["net_metering_sell"] = {0.30, 0.05};
  CHECK_THROWS_AS(parse_scenario(j), ValidationError);
}

TEST_CASE("scenario: feeders must partition across vpps") {
  auto j = minimal_json();
  j["vpps"].push_back({{"id", "V2"}, {"feeders", {"F1"}}});
  CHECK_THROWS_AS(parse_scenario(j), ValidationError);

  auto j2 = minimal_json();
  j2["vpps"] = nlohmann::json::array();
  CHECK_THROWS_AS(parse_scenario(j2), ValidationError);
}

TEST_CASE("scenario: storage invariants enforced") {
  auto j = minimal_json();
  j["prosumers"][0]["storage"] = {{"capacity_kwh", 4.0}, {"soc_kwh", 5.0},
                                  {"charge_rate_kw", 2.0}, {"discharge_rate_kw", 2.0}};
  CHECK_THROWS_AS(parse_scenario(j), ValidationError);  // soc above capacity

  auto j2 = minimal_json();
  j2["prosumers"][0]["storage"] = {{"capacity_kwh", 4.0}, {"soc_kwh", 1.0},
                                   {"charge_rate_kw", 0.0}, {"discharge_rate_kw", 2.0}};
  CHECK_THROWS_AS(parse_scenario(j2), ValidationError);  // zero rate with capacity
}

TEST_CASE("scenario: reserved party names rejected") {
  auto j = minimal_json();
  j["prosumers"][0]["id"] = "UTILITY";
  CHECK_THROWS_AS(parse_scenario(j), ValidationError);
}

TEST_CASE("scenario: unknown node is located") {
  auto j = minimal_json();
  j["prosumers"][1]["node"] = "n9";
  try {
    parse_scenario(j);
    FAIL("expected validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("n9") != std::string::npos);
  }
}

TEST_CASE("scenario: missing file reported as io error") {
  CHECK_THROWS_AS(load_scenario(kDataDir + "/does_not_exist.json"), std::ios_base::failure);
}
