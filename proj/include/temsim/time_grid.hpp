#pragma once

#include <compare>
#include <string>
#include <vector>

#include "temsim/units.hpp"

namespace temsim {

/// Market layers and their decision cadence: feeder-level bilateral trading
/// on 30-minute slots, ancillary participation on 15-minute slots, and the
/// inter-aggregator balancing market on 5-minute slots.  Each finer slot
/// nests exactly inside one coarser slot.
enum class Layer { L1, L2, L3 };

inline int layer_duration(Layer layer) {
  switch (layer) {
    case Layer::L1: return 30;
    case Layer::L2: return 15;
    case Layer::L3: return 5;
  }
  return 0;
}

inline const char* layer_name(Layer layer) {
  switch (layer) {
    case Layer::L1: return "L1";
    case Layer::L2: return "L2";
    case Layer::L3: return "L3";
  }
  return "?";
}

struct MarketSlot {
  Layer layer = Layer::L1;
  int start = 0;     // minutes since scenario start
  int duration = 30; // minutes, fixed by layer

  int end() const { return start + duration; }
  bool contains(int minute) const { return minute >= start && minute < end(); }

  auto operator<=>(const MarketSlot&) const = default;
};

inline MarketSlot make_slot(Layer layer, int start) {
  const int d = layer_duration(layer);
  if (start % d != 0) {
    throw ValidationError("slot start " + std::to_string(start) +
                          " is not aligned to a " + std::to_string(d) +
                          "-minute boundary");
  }
  return MarketSlot{layer, start, d};
}

/// All slots of all three layers covering [0, horizon).
struct TimeGrid {
  int horizon_minutes = 0;
  std::vector<MarketSlot> l1;
  std::vector<MarketSlot> l2;
  std::vector<MarketSlot> l3;

  const std::vector<MarketSlot>& layer_slots(Layer layer) const {
    switch (layer) {
      case Layer::L2: return l2;
      case Layer::L3: return l3;
      default: return l1;
    }
  }

  // Index of the slot containing the given minute within its layer.
  static int index_of(Layer layer, int minute) {
    return minute / layer_duration(layer);
  }
};

inline TimeGrid make_time_grid(int horizon_minutes) {
  if (horizon_minutes <= 0 || horizon_minutes % 30 != 0) {
    throw ValidationError("horizon must be a positive multiple of 30 minutes, got " +
                          std::to_string(horizon_minutes));
  }
  TimeGrid grid;
  grid.horizon_minutes = horizon_minutes;
  for (int t = 0; t < horizon_minutes; t += 30) grid.l1.push_back(make_slot(Layer::L1, t));
  for (int t = 0; t < horizon_minutes; t += 15) grid.l2.push_back(make_slot(Layer::L2, t));
  for (int t = 0; t < horizon_minutes; t += 5) grid.l3.push_back(make_slot(Layer::L3, t));
  return grid;
}

/// The unique enclosing slot one layer up.  L1 slots have no parent.
inline MarketSlot parent_slot(const MarketSlot& slot) {
  switch (slot.layer) {
    case Layer::L3: {
      const int d = layer_duration(Layer::L2);
      return make_slot(Layer::L2, slot.start - (slot.start % d));
    }
    case Layer::L2: {
      const int d = layer_duration(Layer::L1);
      return make_slot(Layer::L1, slot.start - (slot.start % d));
    }
    case Layer::L1:
      break;
  }
  throw ValidationError("top-layer slot has no parent");
}

}  // namespace temsim
