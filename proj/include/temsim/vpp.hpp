#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "temsim/ancillary.hpp"
#include "temsim/exchange.hpp"
#include "temsim/time_grid.hpp"
#include "temsim/units.hpp"

namespace temsim {

/// Aggregator configuration from the scenario file.  Each feeder belongs to
/// exactly one aggregator; the aggregator is non-profit and passes market
/// results back to its prosumers.
struct VppConfig {
  VppId id;
  std::vector<FeederId> feeders;
  double safety_k = 1.0;       // bid margin in standard deviations
  double offer_discount = 0.9; // offer price as a fraction of the price forecast
};

struct OverspillForecast {
  double sellable_per_l2_kwh = 0;   // per 15-minute child slot
  double internal_deficit_kwh = 0;  // logged, not netted against other feeders
};

/// Sums each member feeder's positive net overspill from the parent slot's
/// clearing and splits the 30-minute energy evenly across its two 15-minute
/// slots.  Feeders in net deficit contribute nothing to the sellable side
/// but are recorded for shortfall tracking.
inline OverspillForecast aggregate_overspill(const std::vector<OverspillReport>& feeder_reports) {
  OverspillForecast out;
  double sellable = 0;
  for (const auto& r : feeder_reports) {
    const double net = r.net_kwh();
    if (net > 0) {
      sellable += net;
    } else {
      out.internal_deficit_kwh += -net;
    }
  }
  out.sellable_per_l2_kwh = quantize_energy(sellable / 2.0);
  out.internal_deficit_kwh = quantize_energy(out.internal_deficit_kwh);
  return out;
}

/// Risk-margined one-step bid rule: quantity backs off the forecast by
/// safety_k standard deviations, the offer is a discounted price-taker
/// offer.  No bid when the margin eats the whole forecast or when selling
/// back at net metering would pay better than the expected clearing price.
inline std::optional<AncillaryBid> make_ancillary_bid(const VppId& vpp, const MarketSlot& l2_slot,
                                                      double forecast_kwh, double sigma_kwh,
                                                      double price_forecast, double safety_k,
                                                      double offer_discount,
                                                      double net_metering_price) {
  if (forecast_kwh < 0) throw ValidationError("overspill forecast cannot be negative");
  const double quantity = quantize_energy(std::max(0.0, forecast_kwh - safety_k * sigma_kwh));
  if (quantity <= 0) return std::nullopt;
  if (price_forecast < net_metering_price) return std::nullopt;
  AncillaryBid bid;
  bid.vpp = vpp;
  bid.slot = l2_slot;
  bid.quantity_kwh = quantity;
  bid.offer_price = offer_discount * price_forecast;
  bid.submitted_at = l2_slot.start - 15;
  return bid;
}

struct DeviationReport {
  double committed_kwh = 0;
  double measured_so_far_kwh = 0;
  double projected_kwh = 0;
  double shortfall_kwh = 0;
};

/// Rolling delivery projection for an active award: measured steps so far
/// plus the caller's latest forecast of the remainder.
inline DeviationReport monitor_delivery(double committed_kwh,
                                        const std::vector<double>& measured_steps,
                                        double remainder_forecast_kwh) {
  DeviationReport rep;
  rep.committed_kwh = committed_kwh;
  for (double m : measured_steps) rep.measured_so_far_kwh += m;
  rep.projected_kwh = rep.measured_so_far_kwh + remainder_forecast_kwh;
  rep.shortfall_kwh = quantize_energy(std::max(0.0, committed_kwh - rep.projected_kwh));
  return rep;
}

/// Deficit to post on the 5-minute market: the projected shortfall while a
/// delivery step remains, zero once the window has closed (the shortfall
/// then goes straight to penalty at verification).
inline double l3_deficit_request(double shortfall_kwh, int remaining_steps) {
  if (shortfall_kwh <= 0 || remaining_steps <= 0) return 0.0;
  return quantize_energy(shortfall_kwh);
}

}  // namespace temsim
