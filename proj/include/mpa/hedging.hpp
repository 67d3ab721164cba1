#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mpa/costs.hpp"
#include "mpa/csv.hpp"
#include "mpa/errors.hpp"
#include "mpa/market_data.hpp"
#include "mpa/time.hpp"

namespace mpa {

enum class PeakClass { OnPeak, OffPeak };

// On-peak: [08:00, 20:00) local time, Monday-Friday.
inline PeakClass peak_class(EpochHour t, TimeZone tz = TimeZone::EuropeBerlin) {
  const LocalTime l = local_time(t, tz);
  const bool weekday = l.weekday <= 4;
  return (weekday && l.hour >= 8 && l.hour < 20) ? PeakClass::OnPeak
                                                 : PeakClass::OffPeak;
}

// E = G - Q^hedged; sign decides which price direction benefits the company.
inline double net_exposure(double company_generation_mw, double hedged_mw) {
  return company_generation_mw - hedged_mw;
}

inline double margin(double spot_price, double var_cost) {
  return spot_price - var_cost;
}

// Marginal net profit of withholding one MW: delta * E - m.
inline double net_profit_withhold(double delta, double exposure, double margin_) {
  return delta * exposure - margin_;
}

// Marginal net profit of pushing in one MW: -delta * E + m.
inline double net_profit_pushin(double delta, double exposure, double margin_) {
  return -delta * exposure + margin_;
}

enum class BlockMode { Exact, MarginalScaled };

// Profit change from a finite Q-MW withdrawal. The exact mode includes the
// quadratic self-cannibalization term from the price moving against the
// block itself; marginal_scaled simply scales the per-MW net profit.
inline double block_net_profit_withhold(double delta, double exposure, double margin_,
                                        double q_block, BlockMode mode) {
  if (q_block <= 0) throw DomainError("block size must be positive");
  const double linear = q_block * (delta * exposure - margin_);
  return mode == BlockMode::Exact ? linear - delta * q_block * q_block : linear;
}

inline double block_net_profit_pushin(double delta, double exposure, double margin_,
                                      double q_block, BlockMode mode) {
  if (q_block <= 0) throw DomainError("block size must be positive");
  const double linear = q_block * (-delta * exposure + margin_);
  return mode == BlockMode::Exact ? linear - delta * q_block * q_block : linear;
}

// --- Hedge book --------------------------------------------------------------

struct HedgeCell {
  double hedged_mw = 0;  // r * mean generation over the cell's hours
  double mean_generation_mw = 0;
  size_t hours = 0;
};

// Per (company, civil month, peak class) hedged quantities.
struct HedgeBook {
  double hedge_rate = 1.0;
  TimeZone tz = TimeZone::EuropeBerlin;
  std::map<std::tuple<std::string, std::int64_t, PeakClass>, HedgeCell> cells;

  double hedged_quantity(const std::string& company, EpochHour t) const {
    const auto key = std::make_tuple(company, month_key(t, tz), peak_class(t, tz));
    auto it = cells.find(key);
    if (it == cells.end())
      throw DomainError("no hedge cell for company " + company + " at " +
                        format_timestamp(t));
    return it->second.hedged_mw;
  }
};

// Company total generation per hour: observed generation summed over every
// unit mapped to the company (including non-modeled units carried for totals).
inline std::map<std::string, std::vector<double>> company_generation(
    const std::vector<UnitSpec>& units, const ObservedGeneration& gen, size_t n_hours) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& u : units) {
    auto it = gen.by_unit.find(u.unit_id);
    if (it == gen.by_unit.end()) continue;
    auto& v = out[u.company_id];
    if (v.empty()) v.assign(n_hours, 0.0);
    for (size_t h = 0; h < n_hours; ++h) v[h] += it->second[h];
  }
  return out;
}

// Perfect-foresight monthly hedge: r times the realized mean generation over
// each (company, month, peak-class) cell.
inline HedgeBook build_hedge_book(
    const std::map<std::string, std::vector<double>>& company_gen,
    const std::vector<EpochHour>& timestamps, double hedge_rate,
    TimeZone tz = TimeZone::EuropeBerlin) {
  if (!(hedge_rate >= 0 && hedge_rate <= 1))
    throw ConfigError("hedge rate must be in [0, 1]");
  HedgeBook book;
  book.hedge_rate = hedge_rate;
  book.tz = tz;
  for (const auto& [company, g] : company_gen) {
    for (size_t h = 0; h < timestamps.size(); ++h) {
      auto& cell = book.cells[std::make_tuple(company, month_key(timestamps[h], tz),
                                              peak_class(timestamps[h], tz))];
      cell.mean_generation_mw += g[h];
      cell.hours += 1;
    }
  }
  for (auto& [key, cell] : book.cells) {
    if (cell.hours == 0) throw DomainError("empty hedge cell");
    cell.mean_generation_mw /= static_cast<double>(cell.hours);
    cell.hedged_mw = hedge_rate * cell.mean_generation_mw;
  }
  return book;
}

// --- Incentive panel ----------------------------------------------------------

struct UnitIncentiveRow {
  std::string unit_id;
  std::vector<double> delta;     // EUR/MWh per MW
  std::vector<double> exposure;  // MW
  std::vector<double> margin;    // EUR/MWh
  std::vector<double> pi_w;      // EUR per MW withheld
  std::vector<double> pi_p;      // EUR per MW pushed in
};

struct IncentivePanel {
  std::vector<EpochHour> timestamps;
  std::vector<UnitIncentiveRow> units;
};

inline void write_incentive_panel(const IncentivePanel& panel, const std::string& path) {
  CsvWriter w(path);
  w.row({"timestamp", "unit_id", "delta", "exposure_mw", "margin", "pi_w", "pi_p"});
  for (const auto& u : panel.units)
    for (size_t h = 0; h < panel.timestamps.size(); ++h)
      w.row({format_timestamp(panel.timestamps[h]), u.unit_id,
             format_number(u.delta[h]), format_number(u.exposure[h]),
             format_number(u.margin[h]), format_number(u.pi_w[h]),
             format_number(u.pi_p[h])});
}

}  // namespace mpa
