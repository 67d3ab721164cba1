#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpa/csv.hpp"
#include "mpa/errors.hpp"
#include "mpa/time.hpp"

namespace mpa {

enum class FuelType { Lignite, HardCoal, Ccgt, GasOther };

inline FuelType parse_fuel_type(const std::string& s) {
  if (s == "lignite") return FuelType::Lignite;
  if (s == "hard_coal") return FuelType::HardCoal;
  if (s == "ccgt") return FuelType::Ccgt;
  if (s == "gas_other") return FuelType::GasOther;
  throw ParseError("unknown fuel_type: '" + s + "'");
}

inline std::string fuel_type_name(FuelType f) {
  switch (f) {
    case FuelType::Lignite: return "lignite";
    case FuelType::HardCoal: return "hard_coal";
    case FuelType::Ccgt: return "ccgt";
    case FuelType::GasOther: return "gas_other";
  }
  return "?";
}

inline bool is_gas_fuel(FuelType f) {
  return f == FuelType::Ccgt || f == FuelType::GasOther;
}

// Aligned hourly panel of market-level series.
struct MarketSeries {
  std::vector<EpochHour> timestamps;
  std::vector<double> spot_price;      // EUR/MWh, may be negative
  std::vector<double> demand;          // MW
  std::vector<double> vre_generation;  // MW
  std::vector<double> gas_price;       // EUR/MWh thermal
  std::vector<double> coal_price;      // EUR/MWh thermal
  std::vector<double> carbon_price;    // EUR/tCO2

  size_t size() const { return timestamps.size(); }

  // Index of a timestamp on the hourly grid, or -1.
  std::int64_t index_of(EpochHour t) const {
    if (timestamps.empty()) return -1;
    const std::int64_t i = t - timestamps.front();
    if (i < 0 || i >= static_cast<std::int64_t>(timestamps.size())) return -1;
    return i;
  }

  void validate() const {
    const size_t n = timestamps.size();
    if (spot_price.size() != n || demand.size() != n || vre_generation.size() != n ||
        gas_price.size() != n || coal_price.size() != n || carbon_price.size() != n)
      throw ShapeError("market series columns have unequal lengths");
    for (size_t i = 1; i < n; ++i)
      if (timestamps[i] != timestamps[i - 1] + 1)
        throw AlignmentError("timestamp gap or disorder at " +
                             format_timestamp(timestamps[i - 1] + 1));
    for (size_t i = 0; i < n; ++i) {
      if (demand[i] < 0)
        throw ValidationError("negative demand at " + format_timestamp(timestamps[i]));
      if (vre_generation[i] < 0)
        throw ValidationError("negative vre_generation at " +
                              format_timestamp(timestamps[i]));
      if (gas_price[i] < 0 || coal_price[i] < 0)
        throw ValidationError("negative fuel price at " +
                              format_timestamp(timestamps[i]));
      if (carbon_price[i] < 0)
        throw ValidationError("negative carbon price at " +
                              format_timestamp(timestamps[i]));
    }
  }
};

struct UnitSpec {
  std::string unit_id;
  std::string company_id;
  FuelType fuel_type = FuelType::HardCoal;
  double capacity_mw = 0;              // K_i
  double min_load_mw = 0;              // G_i^min
  double efficiency = 0;               // thermal -> electric
  double startup_depreciation = 0;     // EUR/MW
  double cold_start_fuel = 0;          // MWh thermal / MW
  double cold_start_factor = 0;        // dimensionless
  bool in_scope = true;                // false: counted in company totals only

  void validate() const {
    if (!(min_load_mw > 0 && min_load_mw < capacity_mw))
      throw ValidationError("unit " + unit_id + ": need 0 < min_load < capacity");
    if (!(efficiency > 0 && efficiency < 1))
      throw ValidationError("unit " + unit_id + ": need 0 < efficiency < 1");
    if (startup_depreciation < 0 || cold_start_fuel < 0 || cold_start_factor < 0)
      throw ValidationError("unit " + unit_id + ": negative cost parameter");
  }
};

// Per unit-hour availability; hours absent from the input default to available.
struct OutageMask {
  // unit_id -> set of unavailable hours
  std::map<std::string, std::set<EpochHour>> unavailable;

  bool available(const std::string& unit_id, EpochHour t) const {
    auto it = unavailable.find(unit_id);
    return it == unavailable.end() || !it->second.count(t);
  }
};

// Long-format observed generation, densified against a MarketSeries grid.
struct ObservedGeneration {
  // unit_id -> hourly MW, aligned to the market grid (index 0 = first hour)
  std::map<std::string, std::vector<double>> by_unit;
};

struct UnitHour {
  std::string unit_id;
  EpochHour hour;
  bool operator==(const UnitHour&) const = default;
  auto operator<=>(const UnitHour&) const = default;
};

// --- Loaders ----------------------------------------------------------------

inline MarketSeries load_market(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_ts = t.require_column("timestamp", path);
  const int c_p = t.require_column("spot_price", path);
  const int c_d = t.require_column("demand", path);
  const int c_v = t.require_column("vre_generation", path);
  const int c_g = t.require_column("gas_price", path);
  const int c_c = t.require_column("coal_price", path);
  const int c_co2 = t.require_column("carbon_price", path);
  MarketSeries ms;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    ms.timestamps.push_back(parse_timestamp(row[c_ts]));
    ms.spot_price.push_back(parse_double(row[c_p], path, r, "spot_price"));
    ms.demand.push_back(parse_double(row[c_d], path, r, "demand"));
    ms.vre_generation.push_back(parse_double(row[c_v], path, r, "vre_generation"));
    ms.gas_price.push_back(parse_double(row[c_g], path, r, "gas_price"));
    ms.coal_price.push_back(parse_double(row[c_c], path, r, "coal_price"));
    ms.carbon_price.push_back(parse_double(row[c_co2], path, r, "carbon_price"));
  }
  ms.validate();
  return ms;
}

inline void write_market(const MarketSeries& ms, const std::string& path) {
  CsvWriter w(path);
  w.row({"timestamp", "spot_price", "demand", "vre_generation", "gas_price",
         "coal_price", "carbon_price"});
  for (size_t i = 0; i < ms.size(); ++i)
    w.row({format_timestamp(ms.timestamps[i]), format_number(ms.spot_price[i]),
           format_number(ms.demand[i]), format_number(ms.vre_generation[i]),
           format_number(ms.gas_price[i]), format_number(ms.coal_price[i]),
           format_number(ms.carbon_price[i])});
}

inline std::vector<UnitSpec> load_units(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_id = t.require_column("unit_id", path);
  const int c_co = t.require_column("company_id", path);
  const int c_ft = t.require_column("fuel_type", path);
  const int c_k = t.require_column("capacity_mw", path);
  const int c_min = t.require_column("min_load_mw", path);
  const int c_eff = t.require_column("efficiency", path);
  const int c_dep = t.require_column("startup_depreciation_eur_mw", path);
  const int c_q = t.require_column("cold_start_fuel_mwh_mw", path);
  const int c_r = t.require_column("cold_start_factor", path);
  const int c_scope = t.column("in_scope");  // optional extension column
  std::vector<UnitSpec> units;
  std::set<std::string> seen;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    UnitSpec u;
    u.unit_id = row[c_id];
    u.company_id = row[c_co];
    u.fuel_type = parse_fuel_type(row[c_ft]);
    u.capacity_mw = parse_double(row[c_k], path, r, "capacity_mw");
    u.min_load_mw = parse_double(row[c_min], path, r, "min_load_mw");
    u.efficiency = parse_double(row[c_eff], path, r, "efficiency");
    u.startup_depreciation =
        parse_double(row[c_dep], path, r, "startup_depreciation_eur_mw");
    u.cold_start_fuel = parse_double(row[c_q], path, r, "cold_start_fuel_mwh_mw");
    u.cold_start_factor = parse_double(row[c_r], path, r, "cold_start_factor");
    if (c_scope >= 0)
      u.in_scope = parse_double(row[c_scope], path, r, "in_scope") != 0.0;
    u.validate();
    if (!seen.insert(u.unit_id).second)
      throw ValidationError(path + ": duplicate unit_id " + u.unit_id);
    units.push_back(std::move(u));
  }
  if (units.empty()) throw ValidationError(path + ": no units");
  return units;
}

inline void write_units(const std::vector<UnitSpec>& units, const std::string& path) {
  CsvWriter w(path);
  w.row({"unit_id", "company_id", "fuel_type", "capacity_mw", "min_load_mw",
         "efficiency", "startup_depreciation_eur_mw", "cold_start_fuel_mwh_mw",
         "cold_start_factor", "in_scope"});
  for (const auto& u : units)
    w.row({u.unit_id, u.company_id, fuel_type_name(u.fuel_type),
           format_number(u.capacity_mw), format_number(u.min_load_mw),
           format_number(u.efficiency), format_number(u.startup_depreciation),
           format_number(u.cold_start_fuel), format_number(u.cold_start_factor),
           u.in_scope ? "1" : "0"});
}

inline ObservedGeneration load_generation(const std::string& path,
                                          const MarketSeries& grid) {
  const CsvTable t = read_csv(path);
  const int c_ts = t.require_column("timestamp", path);
  const int c_id = t.require_column("unit_id", path);
  const int c_g = t.require_column("generation_mw", path);
  ObservedGeneration g;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const EpochHour ts = parse_timestamp(row[c_ts]);
    const auto idx = grid.index_of(ts);
    if (idx < 0)
      throw AlignmentError(path + ": timestamp " + row[c_ts] +
                           " outside the market grid");
    auto& v = g.by_unit[row[c_id]];
    if (v.empty()) v.assign(grid.size(), 0.0);
    v[idx] = parse_double(row[c_g], path, r, "generation_mw");
    if (v[idx] < 0)
      throw ValidationError(path + ": negative generation at row " +
                            std::to_string(r + 1));
  }
  return g;
}

inline void write_generation(const ObservedGeneration& g, const MarketSeries& grid,
                             const std::string& path) {
  CsvWriter w(path);
  w.row({"timestamp", "unit_id", "generation_mw"});
  for (const auto& [unit, series] : g.by_unit)
    for (size_t i = 0; i < series.size(); ++i)
      w.row({format_timestamp(grid.timestamps[i]), unit, format_number(series[i])});
}

inline OutageMask load_outages(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_ts = t.require_column("timestamp", path);
  const int c_id = t.require_column("unit_id", path);
  const int c_a = t.require_column("available", path);
  OutageMask m;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const double a = parse_double(row[c_a], path, r, "available");
    if (a != 0.0 && a != 1.0)
      throw ValidationError(path + ": available must be 0 or 1 at row " +
                            std::to_string(r + 1));
    if (a == 0.0) m.unavailable[row[c_id]].insert(parse_timestamp(row[c_ts]));
  }
  return m;
}

inline void write_outages(const OutageMask& m, const std::string& path) {
  CsvWriter w(path);
  w.row({"timestamp", "unit_id", "available"});
  for (const auto& [unit, hours] : m.unavailable)
    for (EpochHour t : hours) w.row({format_timestamp(t), unit, "0"});
}

// --- Derived series ---------------------------------------------------------

// l_h = demand_h - vre_generation_h. May be negative.
inline std::vector<double> residual_load(const MarketSeries& ms) {
  std::vector<double> out(ms.size());
  for (size_t i = 0; i < ms.size(); ++i) out[i] = ms.demand[i] - ms.vre_generation[i];
  return out;
}

// Exactly the unit-hours marked available; downstream stages operate on this set.
inline std::vector<UnitHour> availability_filter(const std::vector<UnitSpec>& units,
                                                 const MarketSeries& ms,
                                                 const OutageMask& mask) {
  std::set<std::string> known;
  for (const auto& u : units) known.insert(u.unit_id);
  for (const auto& [unit, hours] : mask.unavailable)
    if (!known.count(unit))
      throw ReferenceError("outage mask references unknown unit " + unit);
  std::vector<UnitHour> out;
  for (const auto& u : units)
    for (EpochHour t : ms.timestamps)
      if (mask.available(u.unit_id, t)) out.push_back({u.unit_id, t});
  return out;
}

}  // namespace mpa
