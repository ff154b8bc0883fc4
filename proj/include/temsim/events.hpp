#pragma once

#include <algorithm>
#include <vector>

#include "temsim/time_grid.hpp"

namespace temsim {

/// Event kinds in intra-tick rank order: decisions cascade down the layers
/// before delivery, settlement always closes a slot.
enum class EventType { l1_clear = 0, l2_bid = 1, l3_market = 2, deliver = 3, settle = 4 };

inline const char* event_name(EventType t) {
  switch (t) {
    case EventType::l1_clear: return "L1_CLEAR";
    case EventType::l2_bid: return "L2_BID";
    case EventType::l3_market: return "L3_MARKET";
    case EventType::deliver: return "DELIVER";
    case EventType::settle: return "SETTLE";
  }
  return "?";
}

struct Event {
  int time = 0;  // minutes; lead times put the first events before t = 0
  EventType type = EventType::l1_clear;
  MarketSlot slot;

  bool operator<(const Event& other) const {
    if (time != other.time) return time < other.time;
    if (type != other.type) return static_cast<int>(type) < static_cast<int>(other.type);
    return slot.start < other.slot.start;
  }
};

/// Full deterministic schedule: each layer decides one lead time (its own
/// slot length) ahead of delivery, deliveries tick every 5 minutes, and each
/// 30-minute slot settles at its end.
inline std::vector<Event> schedule_events(const TimeGrid& grid) {
  std::vector<Event> events;
  events.reserve(grid.l1.size() * 2 + grid.l2.size() + grid.l3.size() * 2);
  for (const auto& s : grid.l1) {
    events.push_back(Event{s.start - 30, EventType::l1_clear, s});
    events.push_back(Event{s.end(), EventType::settle, s});
  }
  for (const auto& s : grid.l2) events.push_back(Event{s.start - 15, EventType::l2_bid, s});
  for (const auto& s : grid.l3) {
    events.push_back(Event{s.start - 5, EventType::l3_market, s});
    events.push_back(Event{s.start, EventType::deliver, s});
  }
  std::sort(events.begin(), events.end());
  return events;
}

}  // namespace temsim
