#pragma once

#include <vector>

#include "mpa/dispatch.hpp"
#include "mpa/market_data.hpp"

namespace mpa {

// Fuel-cost assumptions shared by the dispatch benchmark and the incentive
// calculations. Emission factors are per MWh thermal; lignite has no traded
// price series, so a constant mine-mouth cost is assumed.
struct CostConfig {
  double ef_gas = 0.202;        // tCO2/MWh_th
  double ef_hard_coal = 0.340;  // tCO2/MWh_th
  double ef_lignite = 0.364;    // tCO2/MWh_th
  double lignite_price = 4.0;   // EUR/MWh_th
};

inline double emission_factor(const CostConfig& cc, FuelType f) {
  switch (f) {
    case FuelType::Lignite: return cc.ef_lignite;
    case FuelType::HardCoal: return cc.ef_hard_coal;
    default: return cc.ef_gas;
  }
}

// Fuel price in EUR/MWh thermal for the unit's fuel at hour index i.
inline double fuel_price_at(const CostConfig& cc, const MarketSeries& ms, FuelType f,
                            size_t i) {
  switch (f) {
    case FuelType::Lignite: return cc.lignite_price;
    case FuelType::HardCoal: return ms.coal_price[i];
    default: return ms.gas_price[i];
  }
}

// Per-iteration parameter multipliers (all 1.0 for the nominal run).
struct CostMultipliers {
  double efficiency = 1.0;
  double fuel_cost = 1.0;
  double cold_start = 1.0;
};

// Build the per-hour dispatch problem for one unit under given multipliers.
inline DispatchProblem unit_dispatch_problem(const UnitSpec& u, const MarketSeries& ms,
                                             const CostConfig& cc,
                                             const CostMultipliers& m = {}) {
  const size_t n = ms.size();
  DispatchProblem p;
  p.prices = ms.spot_price;
  p.variable_cost.resize(n);
  p.startup_cost.resize(n);
  p.capacity_mw = u.capacity_mw;
  p.min_load_mw = u.min_load_mw;
  const double eff = u.efficiency * m.efficiency;
  const double ef = emission_factor(cc, u.fuel_type);
  for (size_t i = 0; i < n; ++i) {
    const double fuel = m.fuel_cost * fuel_price_at(cc, ms, u.fuel_type, i);
    const double thermal = fuel + ef * ms.carbon_price[i];
    p.variable_cost[i] = variable_cost(fuel, ef * ms.carbon_price[i], eff);
    p.startup_cost[i] =
        startup_cost(u.capacity_mw, u.startup_depreciation, u.cold_start_fuel,
                     u.cold_start_factor * m.cold_start, thermal);
  }
  return p;
}

// Nominal (unperturbed) variable cost series for the unit; used for margins.
inline std::vector<double> nominal_variable_cost(const UnitSpec& u,
                                                 const MarketSeries& ms,
                                                 const CostConfig& cc) {
  std::vector<double> out(ms.size());
  const double ef = emission_factor(cc, u.fuel_type);
  for (size_t i = 0; i < ms.size(); ++i)
    out[i] = variable_cost(fuel_price_at(cc, ms, u.fuel_type, i),
                           ef * ms.carbon_price[i], u.efficiency);
  return out;
}

}  // namespace mpa
