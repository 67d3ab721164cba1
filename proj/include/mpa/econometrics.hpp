#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpa/hedging.hpp"
#include "mpa/logit.hpp"
#include "mpa/market_data.hpp"
#include "mpa/monte_carlo.hpp"

namespace mpa {

// One eligible unit-hour after joining the dispatch and incentive panels.
struct PanelObs {
  int z = 0;   // competitive benchmark regime
  int y = 0;   // deviation
  double pi_w = 0;
  double pi_p = 0;
  double delta = 0;
  double capacity_mw = 0;
  double demand_mw = 0;
  size_t hour = 0;  // index on the market grid
  int year = 0;
  FuelType fuel = FuelType::HardCoal;
  std::string unit_id;
  std::string company_id;
};

// Joins the two panels over available unit-hours with a defined benchmark.
inline std::vector<PanelObs> join_panels(const DispatchPanel& dp,
                                         const IncentivePanel& ip,
                                         const std::vector<UnitSpec>& units,
                                         const MarketSeries& ms,
                                         TimeZone tz = TimeZone::EuropeBerlin) {
  if (dp.timestamps != ip.timestamps)
    throw ShapeError("dispatch and incentive panels cover different hours");
  std::map<std::string, const UnitIncentiveRow*> inc;
  for (const auto& u : ip.units) inc[u.unit_id] = &u;
  std::map<std::string, const UnitSpec*> spec;
  for (const auto& u : units) spec[u.unit_id] = &u;

  std::vector<PanelObs> out;
  for (const auto& du : dp.units) {
    auto it = inc.find(du.unit_id);
    if (it == inc.end())
      throw ReferenceError("unit " + du.unit_id + " missing from incentive panel");
    auto su = spec.find(du.unit_id);
    if (su == spec.end())
      throw ReferenceError("unit " + du.unit_id + " missing from unit list");
    const UnitIncentiveRow& iu = *it->second;
    for (size_t h = 0; h < dp.timestamps.size(); ++h) {
      if (!du.available[h] || du.z[h] == kExcluded) continue;
      PanelObs o;
      o.z = du.z[h];
      o.y = du.y[h];
      o.pi_w = iu.pi_w[h];
      o.pi_p = iu.pi_p[h];
      o.delta = iu.delta[h];
      o.capacity_mw = su->second->capacity_mw;
      o.demand_mw = ms.demand[h];
      o.hour = h;
      o.year = civil_year(dp.timestamps[h], tz);
      o.fuel = su->second->fuel_type;
      o.unit_id = du.unit_id;
      o.company_id = su->second->company_id;
      out.push_back(std::move(o));
    }
  }
  return out;
}

// Result of one regime's fit; estimation diagnostics are carried, not thrown.
struct RegimeFit {
  std::optional<LogitFit> fit;
  std::string diagnostic;  // nonempty when skipped
  size_t n = 0;
};

struct RegimeSplitFit {
  RegimeFit withhold;  // z = 1, outcome 1{y = -1}, predictor pi_w
  RegimeFit pushin;    // z = 0, outcome 1{y = +1}, predictor pi_p
};

template <typename Pred>
inline RegimeFit fit_one_regime(const std::vector<PanelObs>& obs, int regime,
                                int deviation_value, Pred predictor) {
  std::vector<double> x;
  std::vector<int> y;
  for (const auto& o : obs) {
    if (o.z != regime) continue;
    x.push_back(predictor(o));
    y.push_back(o.y == deviation_value ? 1 : 0);
  }
  RegimeFit rf;
  rf.n = x.size();
  if (x.empty()) {
    rf.diagnostic = "empty regime";
    return rf;
  }
  try {
    rf.fit = fit_logit(x, y);
  } catch (const SeparationError& e) {
    rf.diagnostic = e.what();
  } catch (const DomainError& e) {
    rf.diagnostic = e.what();
  }
  return rf;
}

inline RegimeSplitFit regime_split_fit(const std::vector<PanelObs>& obs) {
  RegimeSplitFit r;
  r.withhold = fit_one_regime(obs, 1, -1, [](const PanelObs& o) { return o.pi_w; });
  r.pushin = fit_one_regime(obs, 0, 1, [](const PanelObs& o) { return o.pi_p; });
  return r;
}

enum class Grouping { Year, FuelType, Company };

inline Grouping parse_grouping(const std::string& s) {
  if (s == "year") return Grouping::Year;
  if (s == "fuel_type") return Grouping::FuelType;
  if (s == "company") return Grouping::Company;
  throw ConfigError("unknown grouping: " + s);
}

inline std::string group_key(const PanelObs& o, Grouping g) {
  switch (g) {
    case Grouping::Year: return std::to_string(o.year);
    case Grouping::FuelType: return fuel_type_name(o.fuel);
    case Grouping::Company: return o.company_id;
  }
  return "?";
}

inline std::map<std::string, RegimeSplitFit> subgroup_fits(
    const std::vector<PanelObs>& obs, Grouping grouping) {
  std::map<std::string, std::vector<PanelObs>> groups;
  for (const auto& o : obs) groups[group_key(o, grouping)].push_back(o);
  std::map<std::string, RegimeSplitFit> out;
  for (const auto& [key, g] : groups) out[key] = regime_split_fit(g);
  return out;
}

}  // namespace mpa
