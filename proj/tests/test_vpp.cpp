#include <catch2/catch.hpp>

#include "temsim/vpp.hpp"

using namespace temsim;

namespace {
const MarketSlot kL1 = make_slot(Layer::L1, 30);
const MarketSlot kL2 = make_slot(Layer::L2, 30);

OverspillReport report(const char* feeder, double unmatched_sell, double unmatched_buy) {
  return OverspillReport{FeederId{feeder}, kL1, unmatched_sell, unmatched_buy};
}
}  // namespace

TEST_CASE("aggregation: positive nets sum and split across the two child slots") {
  const auto f = aggregate_overspill({report("F1", 1.0, 0.0), report("F2", 0.5, 0.0)});
  CHECK(f.sellable_per_l2_kwh == Approx(0.75));
  CHECK(f.internal_deficit_kwh == 0.0);
}

TEST_CASE("aggregation: all-zero feeders contribute nothing") {
  const auto f = aggregate_overspill({report("F1", 0, 0), report("F2", 0, 0)});
  CHECK(f.sellable_per_l2_kwh == 0.0);
}

TEST_CASE("aggregation: deficit feeders clamp to zero and are logged") {
  const auto f = aggregate_overspill({report("F1", 1.0, 0.0), report("F2", 0.0, 0.4)});
  CHECK(f.sellable_per_l2_kwh == Approx(0.5));
  CHECK(f.internal_deficit_kwh == Approx(0.4));
}

TEST_CASE("aggregation: conserves energy across the split") {
  const auto f = aggregate_overspill({report("F1", 1.3, 0.1), report("F2", 0.7, 0.2)});
  CHECK(2.0 * f.sellable_per_l2_kwh == Approx(1.2 + 0.5).margin(1e-9));
}

TEST_CASE("bids: margin rule backs off by safety_k sigmas") {
  const auto b = make_ancillary_bid(VppId{"V"}, kL2, 1.0, 0.2, 0.20, 1.0, 0.9, 0.05);
  REQUIRE(b);
  CHECK(b->quantity_kwh == Approx(0.8));
  CHECK(b->offer_price == Approx(0.18));
  CHECK(b->submitted_at == kL2.start - 15);
}

TEST_CASE("bids: margin exceeding the forecast suppresses the bid") {
  CHECK(!make_ancillary_bid(VppId{"V"}, kL2, 0.1, 0.2, 0.20, 1.0, 0.9, 0.05));
}

TEST_CASE("bids: zero margin bids the whole forecast") {
  const auto b = make_ancillary_bid(VppId{"V"}, kL2, 1.0, 0.2, 0.20, 0.0, 0.9, 0.05);
  REQUIRE(b);
  CHECK(b->quantity_kwh == Approx(1.0));
  // never over-bid the forecast
  CHECK(b->quantity_kwh <= 1.0);
}

TEST_CASE("bids: clearing forecast below net metering is not worth selling") {
  CHECK(!make_ancillary_bid(VppId{"V"}, kL2, 1.0, 0.0, 0.04, 0.0, 0.9, 0.05));
}

TEST_CASE("bids: negative forecast rejected") {
  CHECK_THROWS_AS(make_ancillary_bid(VppId{"V"}, kL2, -0.1, 0, 0.2, 1, 0.9, 0.05),
                  ValidationError);
}

TEST_CASE("monitoring: on-track delivery projects no shortfall") {
  const auto rep = monitor_delivery(0.9, {0.3}, 0.6);
  CHECK(rep.projected_kwh == Approx(0.9));
  CHECK(rep.shortfall_kwh == 0.0);
}

TEST_CASE("monitoring: weak first step projects the gap") {
  const auto rep = monitor_delivery(0.9, {0.1}, 0.4);
  CHECK(rep.projected_kwh == Approx(0.5));
  CHECK(rep.shortfall_kwh == Approx(0.4));
}

TEST_CASE("monitoring: zero commitment never shorts") {
  const auto rep = monitor_delivery(0.0, {0.0, 0.0}, 0.0);
  CHECK(rep.shortfall_kwh == 0.0);
}

TEST_CASE("secondary-market requests respect the delivery window") {
  CHECK(l3_deficit_request(0.4, 2) == Approx(0.4));
  CHECK(l3_deficit_request(0.0, 2) == 0.0);
  CHECK(l3_deficit_request(0.4, 0) == 0.0);
}
