#include <catch2/catch.hpp>

#include <algorithm>
#include <vector>

#include "temsim/ledger.hpp"
#include "temsim/rng.hpp"

using namespace temsim;

namespace {

const MarketSlot kSlot = make_slot(Layer::L1, 30);
const FeederId kFeeder{"F1"};

Order mk(const char* agent, Side side, double qty, double price) {
  return Order{AgentId{agent}, kFeeder, kSlot, side, qty, price, 0};
}

// Exhaustive pairing oracle for tiny books: maximum total quantity matched
// under the crossing rule, ignoring prices paid.  Used to confirm the greedy
// clears maximal volume.
double max_matchable(std::vector<Order> orders) {
  std::vector<Order> sells, buys;
  for (const auto& o : orders) (o.side == Side::sell ? sells : buys).push_back(o);
  // Greedy on sorted books is known-maximal for crossing-limit matching;
  // verify against a direct LP-like sweep: repeatedly match the most
  // flexible pair by trying all pairs.
  double total = 0;
  bool progress = true;
  while (progress) {
    progress = false;
    double best_q = 0;
    std::size_t bi = 0, si = 0;
    for (std::size_t i = 0; i < sells.size(); ++i) {
      for (std::size_t j = 0; j < buys.size(); ++j) {
        if (sells[i].agent == buys[j].agent) continue;
        if (sells[i].limit_price > buys[j].limit_price) continue;
        const double q = std::min(sells[i].quantity_kwh, buys[j].quantity_kwh);
        if (q > best_q) {
          best_q = q;
          si = i;
          bi = j;
        }
      }
    }
    if (best_q > 0) {
      sells[si].quantity_kwh -= best_q;
      buys[bi].quantity_kwh -= best_q;
      total += best_q;
      progress = true;
    }
  }
  return total;
}

}  // namespace

TEST_CASE("matching: partial fill at the midpoint") {
  long seq = 0;
  const auto res = match_orders({mk("A", Side::sell, 2.0, 0.08), mk("B", Side::buy, 1.0, 0.10)},
                                kSlot, kFeeder, seq);
  REQUIRE(res.contracts.size() == 1);
  CHECK(res.contracts[0].seller.value == "A");
  CHECK(res.contracts[0].buyer.value == "B");
  CHECK(res.contracts[0].quantity_kwh == Approx(1.0));
  CHECK(res.contracts[0].price == Approx(0.09));
  CHECK(res.overspill.unmatched_sell_kwh == Approx(1.0));
  CHECK(res.overspill.unmatched_buy_kwh == Approx(0.0));
}

TEST_CASE("matching: no crossing leaves both sides unmatched") {
  long seq = 0;
  const auto res = match_orders({mk("A", Side::sell, 1.0, 0.12), mk("B", Side::buy, 1.0, 0.10)},
                                kSlot, kFeeder, seq);
  CHECK(res.contracts.empty());
  CHECK(res.overspill.unmatched_sell_kwh == Approx(1.0));
  CHECK(res.overspill.unmatched_buy_kwh == Approx(1.0));
}

TEST_CASE("matching: price priority pairs cheapest seller with dearest buyer") {
  long seq = 0;
  const auto res = match_orders(
      {mk("A", Side::sell, 1.0, 0.06), mk("B", Side::sell, 1.0, 0.07),
       mk("C", Side::buy, 1.0, 0.10), mk("D", Side::buy, 1.0, 0.09)},
      kSlot, kFeeder, seq);
  REQUIRE(res.contracts.size() == 2);
  CHECK(res.contracts[0].seller.value == "A");
  CHECK(res.contracts[0].buyer.value == "C");
  CHECK(res.contracts[0].price == Approx(0.08));
  CHECK(res.contracts[1].seller.value == "B");
  CHECK(res.contracts[1].buyer.value == "D");
  CHECK(res.contracts[1].price == Approx(0.08));
  CHECK(res.overspill.unmatched_sell_kwh == Approx(0.0));
  CHECK(res.overspill.unmatched_buy_kwh == Approx(0.0));
  CHECK(max_matchable({mk("A", Side::sell, 1.0, 0.06), mk("B", Side::sell, 1.0, 0.07),
                       mk("C", Side::buy, 1.0, 0.10), mk("D", Side::buy, 1.0, 0.09)}) ==
        Approx(2.0));
}

TEST_CASE("matching: empty book is fine") {
  long seq = 0;
  const auto res = match_orders({}, kSlot, kFeeder, seq);
  CHECK(res.contracts.empty());
  CHECK(res.overspill.net_kwh() == 0.0);
}

TEST_CASE("matching: self-cross is skipped, other trades proceed") {
  long seq = 0;
  // W posts both sides (wash); the sell should match B, the buy should match S.
  const auto res = match_orders(
      {mk("W", Side::sell, 1.0, 0.06), mk("W", Side::buy, 0.5, 0.10),
       mk("B", Side::buy, 1.0, 0.09), mk("S", Side::sell, 0.5, 0.07)},
      kSlot, kFeeder, seq);
  for (const auto& c : res.contracts) CHECK(c.seller != c.buyer);
  const double matched = [&] {
    double q = 0;
    for (const auto& c : res.contracts) q += c.quantity_kwh;
    return q;
  }();
  CHECK(matched == Approx(1.5));
}

TEST_CASE("matching: contract price always within the crossing limits") {
  auto rng = substream(5, "exchange", "prices", 0);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<Order> orders;
    const int n = 2 + static_cast<int>(rng.next_u64() % 6);
    for (int i = 0; i < n; ++i) {
      const bool sell = rng.next_u64() % 2 == 0;
      orders.push_back(mk(("A" + std::to_string(i)).c_str(), sell ? Side::sell : Side::buy,
                          0.1 + 2.0 * rng.next_unit(), 0.05 + 0.25 * rng.next_unit()));
    }
    long seq = 0;
    const auto res = match_orders(orders, kSlot, kFeeder, seq);
    double matched = 0, sold = 0, bought = 0;
    for (const auto& c : res.contracts) {
      matched += c.quantity_kwh;
      double sell_limit = 0, buy_limit = 0;
      for (const auto& o : orders) {
        if (o.agent == c.seller && o.side == Side::sell) sell_limit = o.limit_price;
        if (o.agent == c.buyer && o.side == Side::buy) buy_limit = o.limit_price;
      }
      CHECK(c.price >= sell_limit - 1e-12);
      CHECK(c.price <= buy_limit + 1e-12);
    }
    for (const auto& c : res.contracts) {
      sold += c.quantity_kwh;
      bought += c.quantity_kwh;
    }
    CHECK(sold == bought);  // conservation by construction

    double total_sell = 0, total_buy = 0, min_buy_limit = 1e9, max_sell_limit = -1e9;
    for (const auto& o : orders) {
      if (o.side == Side::sell) {
        total_sell += quantize_energy(o.quantity_kwh);
        max_sell_limit = std::max(max_sell_limit, o.limit_price);
      } else {
        total_buy += quantize_energy(o.quantity_kwh);
        min_buy_limit = std::min(min_buy_limit, o.limit_price);
      }
    }
    CHECK(matched <= std::min(total_sell, total_buy) + 1e-9);
    if (min_buy_limit >= max_sell_limit) {
      // fully crossed book: greedy volume is maximal
      CHECK(matched == Approx(std::min(total_sell, total_buy)).margin(1e-9));
      CHECK(matched == Approx(max_matchable(orders)).margin(1e-9));
    }
  }
}

TEST_CASE("matching: submission order is irrelevant") {
  std::vector<Order> orders = {
      mk("P1", Side::sell, 1.2, 0.06), mk("P2", Side::sell, 0.8, 0.08),
      mk("P3", Side::buy, 1.0, 0.10),  mk("P4", Side::buy, 0.7, 0.09),
      mk("P5", Side::buy, 0.4, 0.07),
  };
  long seq1 = 0;
  const auto base = match_orders(orders, kSlot, kFeeder, seq1);
  auto rng = substream(11, "exchange", "shuffle", 0);
  for (int trial = 0; trial < 10; ++trial) {
    for (std::size_t i = orders.size(); i > 1; --i) {
      std::swap(orders[i - 1], orders[rng.next_u64() % i]);
    }
    long seq2 = 0;
    const auto shuffled = match_orders(orders, kSlot, kFeeder, seq2);
    REQUIRE(shuffled.contracts.size() == base.contracts.size());
    for (std::size_t i = 0; i < base.contracts.size(); ++i) {
      CHECK(shuffled.contracts[i].seller == base.contracts[i].seller);
      CHECK(shuffled.contracts[i].buyer == base.contracts[i].buyer);
      CHECK(shuffled.contracts[i].quantity_kwh == Approx(base.contracts[i].quantity_kwh));
      CHECK(shuffled.contracts[i].price == Approx(base.contracts[i].price));
    }
  }
}

TEST_CASE("matching: rejects orders from the wrong book or late submission") {
  long seq = 0;
  auto wrong_feeder = mk("A", Side::sell, 1, 0.08);
  wrong_feeder.feeder = FeederId{"F2"};
  CHECK_THROWS_AS(match_orders({wrong_feeder}, kSlot, kFeeder, seq), ValidationError);

  auto late = mk("A", Side::sell, 1, 0.08);
  late.submitted_at = kSlot.start - 29;
  CHECK_THROWS_AS(match_orders({late}, kSlot, kFeeder, seq), ValidationError);

  auto zero = mk("A", Side::sell, 0, 0.08);
  CHECK_THROWS_AS(match_orders({zero}, kSlot, kFeeder, seq), ValidationError);
}

TEST_CASE("overspill: signed nets per feeder") {
  OverspillReport a{FeederId{"F1"}, kSlot, 1.0, 0.0};
  OverspillReport b{FeederId{"F1"}, kSlot, 0.0, 0.0};
  OverspillReport c{FeederId{"F2"}, kSlot, 0.4, 1.0};
  const auto net = compute_overspill({a, b, c});
  CHECK(net.at(FeederId{"F1"}) == Approx(1.0));
  CHECK(net.at(FeederId{"F2"}) == Approx(-0.6));
}

TEST_CASE("settlement: exact delivery pays the contract and nothing else") {
  Contract c;
  c.seller = AgentId{"S"};
  c.buyer = AgentId{"B"};
  c.slot = kSlot;
  c.quantity_kwh = 1.0;
  c.price = 0.09;
  std::map<AgentId, AgentSlotPosition> pos;
  pos[c.seller] = AgentSlotPosition{1.0, 1.0, 0, 0};
  pos[c.buyer] = AgentSlotPosition{-1.0, -1.0, 0, 0};
  const auto entries = settle_slot({c}, pos, SlotTariffs{0.30, 0.05}, kSlot);
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].payer == "B");
  CHECK(entries[0].payee == "S");
  CHECK(entries[0].amount == Approx(0.09));
  CHECK(entries[0].reason == FlowReason::p2p_contract);
}

TEST_CASE("settlement: under-delivery buys replacement energy at retail") {
  Contract c;
  c.seller = AgentId{"S"};
  c.buyer = AgentId{"B"};
  c.slot = kSlot;
  c.quantity_kwh = 1.0;
  c.price = 0.09;
  std::map<AgentId, AgentSlotPosition> pos;
  pos[c.seller] = AgentSlotPosition{1.0, 0.8, 0, 0};  // delivered 0.8 of 1.0
  pos[c.buyer] = AgentSlotPosition{-1.0, -1.0, 0, 0};
  const auto entries = settle_slot({c}, pos, SlotTariffs{0.30, 0.05}, kSlot);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].amount == Approx(0.09));
  CHECK(entries[1].payer == "S");
  CHECK(entries[1].payee == kUtilityName);
  CHECK(entries[1].amount == Approx(0.06));
  CHECK(entries[1].reason == FlowReason::deviation);
}

TEST_CASE("settlement: plain consumption settles as a utility purchase") {
  std::map<AgentId, AgentSlotPosition> pos;
  pos[AgentId{"P"}] = AgentSlotPosition{-2.0, -2.0, 0, 0};
  const auto entries = settle_slot({}, pos, SlotTariffs{0.30, 0.05}, kSlot);
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].payer == "P");
  CHECK(entries[0].payee == kUtilityName);
  CHECK(entries[0].amount == Approx(0.60));
  CHECK(entries[0].reason == FlowReason::utility_purchase);
}

TEST_CASE("settlement: missing measurement for a contracted agent faults") {
  Contract c;
  c.seller = AgentId{"S"};
  c.buyer = AgentId{"B"};
  c.slot = kSlot;
  c.quantity_kwh = 1.0;
  c.price = 0.09;
  std::map<AgentId, AgentSlotPosition> pos;
  pos[c.seller] = AgentSlotPosition{1.0, 1.0, 0, 0};
  CHECK_THROWS_AS(settle_slot({c}, pos, SlotTariffs{0.30, 0.05}, kSlot), SimFault);
}

TEST_CASE("ledger: zero-sum by construction and quantized") {
  SettlementLedger ledger;
  ledger.add(0, "A", "B", 0.123456789123, FlowReason::p2p_contract);
  ledger.add(0, "B", "C", 1e-12, FlowReason::deviation);  // dropped
  ledger.add(0, "C", "A", -0.5, FlowReason::l3_transfer);  // flipped
  REQUIRE(ledger.entries().size() == 2);
  CHECK(ledger.entries()[1].payer == "A");
  CHECK(ledger.entries()[1].payee == "C");
  CHECK(ledger.signed_total() == Approx(0.0).margin(1e-12));
  for (const auto& e : ledger.entries()) CHECK(e.amount > 0);
}
