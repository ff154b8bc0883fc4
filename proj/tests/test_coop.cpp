#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support/oracles.hpp"
#include "temsim/coop_market.hpp"
#include "temsim/rng.hpp"

using namespace temsim;
using temsim::testing::shapley_by_permutations;

namespace {

const MarketSlot kL3 = make_slot(Layer::L3, 30);

VppPosition deficit(const char* id, double kwh) {
  return VppPosition{VppId{id}, kL3, kwh, 0.0};
}
VppPosition surplus(const char* id, double kwh) {
  return VppPosition{VppId{id}, kL3, 0.0, kwh};
}

std::vector<double> random_monotone_table(int n, RngStream& rng) {
  std::vector<double> v(1u << n, 0.0);
  for (std::uint32_t s = 1; s < v.size(); ++s) {
    double base = 0;
    for (int i = 0; i < n; ++i) {
      if (s >> i & 1u) base = std::max(base, v[s & ~(1u << i)]);
    }
    v[s] = base + rng.next_unit();
  }
  return v;
}

}  // namespace

TEST_CASE("characteristic value: penalty avoided by internal reallocation") {
  CHECK(characteristic_value({deficit("A", 2), surplus("B", 1)}, 1.0) == Approx(1.0));
  CHECK(characteristic_value({surplus("B", 1), surplus("C", 3)}, 1.0) == 0.0);
  CHECK(characteristic_value({deficit("A", 2), surplus("B", 1), surplus("C", 1)}, 1.0) ==
        Approx(2.0));
}

TEST_CASE("coalition formation: grand coalition over posting players") {
  const auto game = form_coalition({deficit("A", 2), surplus("B", 1), surplus("C", 1)}, 1.0, kL3);
  REQUIRE(game);
  CHECK(game->size() == 3);
  CHECK(game->players[0].value == "A");

  CHECK(!form_coalition({deficit("A", 2), deficit("B", 1)}, 1.0, kL3));
  CHECK(!form_coalition({}, 1.0, kL3));

  // empty positions are filtered before the player bound applies
  std::vector<VppPosition> many;
  for (int i = 0; i < 13; ++i) {
    many.push_back(i % 2 == 0 ? deficit(("V" + std::to_string(i)).c_str(), 1.0)
                              : surplus(("V" + std::to_string(i)).c_str(), 1.0));
  }
  CHECK_THROWS_AS(form_coalition(many, 1.0, kL3), ValidationError);
}

TEST_CASE("shapley: worked three-player reallocation") {
  const auto game = form_coalition({deficit("A", 2), surplus("B", 1), surplus("C", 1)}, 1.0, kL3);
  REQUIRE(game);
  const auto alloc = shapley_allocate(*game);
  CHECK(alloc.phi.at(VppId{"A"}) == Approx(1.0).margin(1e-12));
  CHECK(alloc.phi.at(VppId{"B"}) == Approx(0.5).margin(1e-12));
  CHECK(alloc.phi.at(VppId{"C"}) == Approx(0.5).margin(1e-12));
}

TEST_CASE("shapley: symmetry and efficiency on a two-player game") {
  // v({1}) = v({2}) = 0, v({1,2}) = 10
  const auto phi = shapley_from_table(2, {0, 0, 0, 10});
  CHECK(phi[0] == Approx(5.0));
  CHECK(phi[1] == Approx(5.0));
}

TEST_CASE("shapley: dummy player gets zero") {
  // player 2 adds nothing to any coalition
  const auto phi = shapley_from_table(2, {0, 7, 0, 7});
  CHECK(phi[0] == Approx(7.0));
  CHECK(phi[1] == Approx(0.0).margin(1e-15));
}

TEST_CASE("shapley: subset formula matches permutation enumeration") {
  auto rng = substream(9, "shapley", "tables", 0);
  for (int n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 4; ++trial) {
      const auto table = random_monotone_table(n, rng);
      const auto fast = shapley_from_table(n, table);
      const auto slow = shapley_by_permutations(n, table);
      for (int i = 0; i < n; ++i) CHECK(std::abs(fast[i] - slow[i]) < 1e-12);
      // efficiency
      const double total = std::accumulate(fast.begin(), fast.end(), 0.0);
      CHECK(total == Approx(table.back()).margin(1e-9));
    }
  }
}

TEST_CASE("shapley: additivity over games") {
  auto rng = substream(10, "shapley", "additivity", 0);
  const int n = 4;
  const auto a = random_monotone_table(n, rng);
  const auto b = random_monotone_table(n, rng);
  std::vector<double> sum(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) sum[i] = a[i] + b[i];
  const auto pa = shapley_from_table(n, a);
  const auto pb = shapley_from_table(n, b);
  const auto ps = shapley_from_table(n, sum);
  for (int i = 0; i < n; ++i) CHECK(ps[i] == Approx(pa[i] + pb[i]).margin(1e-12));
}

TEST_CASE("characteristic function is superadditive") {
  auto rng = substream(12, "coop", "superadd", 0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 5);
    std::vector<VppPosition> positions;
    for (int i = 0; i < n; ++i) {
      const double q = 0.1 * static_cast<double>(1 + rng.next_u64() % 30);
      positions.push_back(rng.next_u64() % 2 == 0 ? deficit(("V" + std::to_string(i)).c_str(), q)
                                                  : surplus(("V" + std::to_string(i)).c_str(), q));
    }
    CoalitionGame game;
    game.penalty_rate = 0.4;
    game.slot = kL3;
    for (const auto& p : positions) {
      game.players.push_back(p.vpp);
      game.deficit.push_back(p.deficit_kwh);
      game.surplus.push_back(p.surplus_kwh);
    }
    const std::uint32_t full = (1u << n) - 1;
    for (std::uint32_t s = 0; s <= full; ++s) {
      const std::uint32_t t = full & ~s;  // complement: disjoint by construction
      CHECK(game.value(full) >= game.value(s) + game.value(t) - 1e-12);
    }
  }
}

TEST_CASE("transfers: worked example balances the pool") {
  const auto game = form_coalition({deficit("A", 2), surplus("B", 1), surplus("C", 1)}, 1.0, kL3);
  REQUIRE(game);
  const auto alloc = shapley_allocate(*game);
  const auto out = execute_transfers(*game, alloc);

  REQUIRE(out.trades.size() == 2);
  CHECK(out.trades[0].seller.value == "B");
  CHECK(out.trades[0].buyer.value == "A");
  CHECK(out.trades[0].quantity_kwh == Approx(1.0));
  CHECK(out.trades[1].seller.value == "C");
  CHECK(out.trades[1].quantity_kwh == Approx(1.0));

  // A pays 2 - 1 = 1; B and C receive 0.5 each.
  std::map<std::string, double> net;
  for (const auto& e : out.entries) {
    net[e.payee] += e.amount;
    net[e.payer] -= e.amount;
  }
  CHECK(net["A"] == Approx(-1.0));
  CHECK(net["B"] == Approx(0.5));
  CHECK(net["C"] == Approx(0.5));
  double total = 0;
  for (const auto& [_, v] : net) total += v;
  CHECK(total == Approx(0.0).margin(1e-12));
}

TEST_CASE("transfers: bilateral one-for-one") {
  const auto game = form_coalition({deficit("A", 1), surplus("B", 1)}, 0.4, kL3);
  REQUIRE(game);
  const auto alloc = shapley_allocate(*game);
  CHECK(alloc.phi.at(VppId{"A"}) == Approx(0.2));
  CHECK(alloc.phi.at(VppId{"B"}) == Approx(0.2));
  const auto out = execute_transfers(*game, alloc);
  REQUIRE(out.trades.size() == 1);
  CHECK(out.trades[0].quantity_kwh == Approx(1.0));
  REQUIRE(out.entries.size() == 1);
  CHECK(out.entries[0].payer == "A");
  CHECK(out.entries[0].payee == "B");
  CHECK(out.entries[0].amount == Approx(0.2));
}

TEST_CASE("transfers: random games keep all the invariants") {
  auto rng = substream(21, "coop", "invariants", 0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<VppPosition> positions;
    const int n = 2 + static_cast<int>(rng.next_u64() % 5);
    for (int i = 0; i < n; ++i) {
      const double q = 0.1 * static_cast<double>(1 + rng.next_u64() % 30);
      positions.push_back(rng.next_u64() % 2 == 0 ? deficit(("V" + std::to_string(i)).c_str(), q)
                                                  : surplus(("V" + std::to_string(i)).c_str(), q));
    }
    const double rate = 0.2 + 0.4 * rng.next_unit();
    const auto game = form_coalition(positions, rate, kL3);
    if (!game) continue;
    const auto alloc = shapley_allocate(*game);
    const auto out = execute_transfers(*game, alloc);

    // individual rationality: nobody ends below their singleton value (0)
    std::map<std::string, double> net;
    for (const auto& e : out.entries) {
      net[e.payee] += e.amount;
      net[e.payer] -= e.amount;
    }
    double pool = 0;
    for (const auto& [_, v] : net) pool += v;
    CHECK(std::abs(pool) < 1e-9);

    double bought = 0, sold = 0;
    for (const auto& [_, q] : out.bought_kwh) bought += q;
    for (const auto& [_, q] : out.sold_kwh) sold += q;
    CHECK(bought == Approx(sold).margin(1e-6));

    // deficit players: avoided penalty minus payment equals phi
    for (int i = 0; i < game->size(); ++i) {
      const auto& id = game->players[i];
      const double cash = net.count(id.value) ? net.at(id.value) : 0.0;
      if (game->deficit[i] > 0) {
        const double covered = out.bought_kwh.count(id) ? out.bought_kwh.at(id) : 0.0;
        const double gain = rate * covered + cash;
        CHECK(gain == Approx(alloc.phi.at(id)).margin(1e-6));
        CHECK(gain >= -1e-9);  // individual rationality
      } else {
        CHECK(cash == Approx(alloc.phi.at(id)).margin(1e-6));
        CHECK(cash >= -1e-9);
      }
    }

    // post-trade penalty reduction equals v(N)
    const double total_deficit = std::accumulate(game->deficit.begin(), game->deficit.end(), 0.0);
    const double uncovered = total_deficit - bought;
    const double penalty_with = rate * uncovered;
    const double penalty_without = rate * total_deficit;
    CHECK(penalty_without - penalty_with ==
          Approx(game->value((1u << game->size()) - 1)).margin(1e-6));
  }
}

TEST_CASE("transfers: no complementary positions means no trades") {
  CoalitionGame game;
  game.penalty_rate = 1.0;
  game.slot = kL3;
  game.players = {VppId{"A"}};
  game.deficit = {1.0};
  game.surplus = {0.0};
  Allocation alloc;
  alloc.phi[VppId{"A"}] = 0.0;
  const auto out = execute_transfers(game, alloc);
  CHECK(out.trades.empty());
  CHECK(out.entries.empty());
}

TEST_CASE("transfers: inconsistent allocation faults") {
  const auto game = form_coalition({deficit("A", 1), surplus("B", 1)}, 0.4, kL3);
  REQUIRE(game);
  Allocation bad;
  bad.phi[VppId{"A"}] = 0.4;
  bad.phi[VppId{"B"}] = 0.4;  // sums to 0.8 != v(N) = 0.4
  CHECK_THROWS_AS(execute_transfers(*game, bad), SimFault);
}
