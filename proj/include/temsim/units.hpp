#pragma once

#include <cmath>
#include <compare>
#include <stdexcept>
#include <string>
#include <utility>

namespace temsim {

/// Opaque string identifier with a total, run-stable ordering.  Every
/// tie-break in the engine keys off this ordering, never off arrival order
/// or container iteration order.
template <class Tag>
struct Id {
  std::string value;

  Id() = default;
  explicit Id(std::string v) : value(std::move(v)) {}

  auto operator<=>(const Id&) const = default;
  bool empty() const { return value.empty(); }
};

struct AgentTag;
struct FeederTag;
struct VppTag;

using AgentId = Id<AgentTag>;
using FeederId = Id<FeederTag>;
using VppId = Id<VppTag>;

/// Reserved settlement counterparties.
inline const std::string kUtilityName = "UTILITY";
inline const std::string kIsoName = "ISO";

// Internal quantization grids: energy compares on a 1e-6 kWh lattice, money
// books on a 1e-9 $ lattice so ledger sums stay exactly zero.
inline constexpr double kEnergyQuantum = 1e-6;
inline constexpr double kMoneyQuantum = 1e-9;

inline double quantize_energy(double kwh) {
  return std::round(kwh / kEnergyQuantum) * kEnergyQuantum;
}

inline double quantize_money(double usd) {
  return std::round(usd / kMoneyQuantum) * kMoneyQuantum;
}

/// Domain-rule violation in user-supplied input (scenario files, bad
/// operation arguments).  Message carries the offending location.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internal consistency breach mid-simulation (e.g. a measurement that puts
/// state of charge outside physical bounds).  Aborts the run with context.
class SimFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace temsim
