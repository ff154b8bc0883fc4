#pragma once

#include <algorithm>
#include <vector>

#include "temsim/ledger.hpp"
#include "temsim/time_grid.hpp"
#include "temsim/units.hpp"

namespace temsim {

struct AncillaryBid {
  VppId vpp;
  MarketSlot slot;  // L2
  double quantity_kwh = 0;
  double offer_price = 0;  // $/kWh
  int submitted_at = 0;    // slot.start - 15
};

struct AncillaryAward {
  AncillaryBid bid;
  double awarded_kwh = 0;
  double clearing_price = 0;  // pay-as-cleared
};

struct DeliveryRecord {
  double awarded_kwh = 0;
  double delivered_kwh = 0;  // measured + secondary-market procurement, capped at award
  double shortfall_kwh = 0;
};

/// Exogenous-price clearing: offers at or below the clearing price are
/// accepted in merit order (price, then vpp id) until capacity runs out; the
/// marginal bid may be partially awarded and everyone is paid the clearing
/// price.
inline std::vector<AncillaryAward> clear_bids(std::vector<AncillaryBid> bids,
                                              const MarketSlot& slot, double clearing_price,
                                              double capacity_kwh) {
  std::sort(bids.begin(), bids.end(), [](const AncillaryBid& a, const AncillaryBid& b) {
    return a.offer_price != b.offer_price ? a.offer_price < b.offer_price : a.vpp < b.vpp;
  });
  std::vector<AncillaryAward> awards;
  double remaining = std::max(0.0, capacity_kwh);
  for (const AncillaryBid& bid : bids) {
    if (!(bid.slot == slot)) {
      throw ValidationError("ancillary bid from " + bid.vpp.value +
                            " does not target the clearing slot");
    }
    if (bid.offer_price > clearing_price || remaining <= 0) continue;
    const double q = quantize_energy(std::min(bid.quantity_kwh, remaining));
    if (q <= 0) continue;
    awards.push_back(AncillaryAward{bid, q, clearing_price});
    remaining = quantize_energy(remaining - q);
  }
  return awards;
}

inline DeliveryRecord verify_delivery(const AncillaryAward& award, double measured_kwh,
                                      double l3_procured_kwh) {
  if (measured_kwh < 0 || l3_procured_kwh < 0) {
    throw SimFault("negative delivery measurement for " + award.bid.vpp.value);
  }
  DeliveryRecord rec;
  rec.awarded_kwh = award.awarded_kwh;
  rec.delivered_kwh = std::min(measured_kwh + l3_procured_kwh, award.awarded_kwh);
  rec.shortfall_kwh = quantize_energy(std::max(0.0, award.awarded_kwh - rec.delivered_kwh));
  return rec;
}

struct PenaltyAssessment {
  double revenue = 0;  // $ paid ISO -> VPP for delivered energy
  double penalty = 0;  // $ paid VPP -> ISO for the shortfall
  std::vector<LedgerEntry> entries;
};

inline PenaltyAssessment assess_penalty(const AncillaryAward& award, const DeliveryRecord& record,
                                        double penalty_rate) {
  PenaltyAssessment out;
  out.revenue = quantize_money(award.clearing_price * record.delivered_kwh);
  out.penalty = quantize_money(penalty_rate * record.shortfall_kwh);
  if (out.revenue > 0) {
    out.entries.push_back(LedgerEntry{award.bid.slot.start, kIsoName, award.bid.vpp.value,
                                      out.revenue, FlowReason::ancillary_revenue});
  }
  if (out.penalty > 0) {
    out.entries.push_back(LedgerEntry{award.bid.slot.start, award.bid.vpp.value, kIsoName,
                                      out.penalty, FlowReason::ancillary_penalty});
  }
  return out;
}

}  // namespace temsim
