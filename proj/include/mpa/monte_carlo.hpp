#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mpa/costs.hpp"
#include "mpa/csv.hpp"
#include "mpa/dispatch.hpp"
#include "mpa/errors.hpp"
#include "mpa/market_data.hpp"
#include "mpa/rng.hpp"

namespace mpa {

struct McConfig {
  int iterations = 1000;
  double multiplier_sd = 0.05;
  std::uint64_t seed = 0;
  double keep_threshold = 0.95;
  // Observed MW above this counts as dispatched (metering noise floor).
  double dispatch_epsilon = 1.0;

  void validate() const {
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (!(multiplier_sd >= 0 && multiplier_sd < 1))
      throw ConfigError("multiplier_sd must be in [0, 1)");
    if (!(keep_threshold > 0.5 && keep_threshold <= 1))
      throw ConfigError("keep_threshold must be in (0.5, 1]");
  }
};

// z/y sentinels for unit-hours outside the consensus band (or unavailable).
constexpr int kExcluded = std::numeric_limits<int>::min();

// Three independent N(1, sd) draws keyed on (seed, unit, iteration); truncated
// at 0.01 from below so efficiency stays positive.
inline CostMultipliers sample_multipliers(std::uint64_t seed, const std::string& unit_id,
                                          int iteration, double sd = 0.05) {
  const std::uint64_t uh = hash_string(unit_id);
  auto draw = [&](std::uint64_t dim) {
    const double v = 1.0 + sd * normal01(mix_key(seed, uh, static_cast<std::uint64_t>(
                                                               iteration),
                                                 dim));
    return v < 0.01 ? 0.01 : v;
  };
  return {draw(1), draw(2), draw(3)};
}

// d-bar: fraction of iterations with the unit on, per hour.
inline std::vector<double> average_state(const std::vector<DispatchSolution>& sols) {
  if (sols.empty()) throw ShapeError("no solutions to average");
  const size_t n = sols.front().state.size();
  for (const auto& s : sols)
    if (s.state.size() != n) throw ShapeError("solutions have mismatched lengths");
  std::vector<double> d_bar(n, 0.0);
  for (const auto& s : sols)
    for (size_t h = 0; h < n; ++h) d_bar[h] += s.state[h];
  for (auto& v : d_bar) v /= static_cast<double>(sols.size());
  return d_bar;
}

// Consensus benchmark: 1 above keep_threshold, 0 below 1-keep_threshold.
inline int discretize(double d_bar, double keep_threshold = 0.95) {
  if (!(d_bar >= 0.0 && d_bar <= 1.0))
    throw DomainError("d_bar outside [0,1]: " + std::to_string(d_bar));
  if (d_bar >= keep_threshold) return 1;
  if (d_bar <= 1.0 - keep_threshold) return 0;
  return kExcluded;
}

inline int deviation(int d_observed, int z) {
  if (z == kExcluded) return kExcluded;
  if (d_observed == 1 && z == 0) return 1;
  if (d_observed == 0 && z == 1) return -1;
  return 0;
}

// Per-unit result of the Monte Carlo dispatch layer, aligned to the market grid.
struct UnitDispatchRow {
  std::string unit_id;
  std::vector<double> d_bar;
  std::vector<int> z;
  std::vector<int> d_observed;
  std::vector<int> y;
  std::vector<std::uint8_t> available;
};

struct DispatchPanel {
  std::vector<EpochHour> timestamps;
  std::vector<UnitDispatchRow> units;
};

// Run N perturbed rolling-horizon dispatches for one unit and aggregate.
inline std::vector<double> unit_average_state(const UnitSpec& u, const MarketSeries& ms,
                                              const CostConfig& cc, const McConfig& mc) {
  mc.validate();
  const size_t n = ms.size();
  std::vector<double> d_bar(n, 0.0);
  for (int it = 0; it < mc.iterations; ++it) {
    const CostMultipliers mult =
        sample_multipliers(mc.seed, u.unit_id, it, mc.multiplier_sd);
    const DispatchProblem p = unit_dispatch_problem(u, ms, cc, mult);
    const DispatchSolution sol = chain_horizons(p);
    for (size_t h = 0; h < n; ++h) d_bar[h] += sol.state[h];
  }
  for (auto& v : d_bar) v /= static_cast<double>(mc.iterations);
  return d_bar;
}

inline UnitDispatchRow build_unit_row(const UnitSpec& u, const MarketSeries& ms,
                                      const ObservedGeneration& gen,
                                      const OutageMask& mask, const CostConfig& cc,
                                      const McConfig& mc) {
  UnitDispatchRow row;
  row.unit_id = u.unit_id;
  row.d_bar = unit_average_state(u, ms, cc, mc);
  const size_t n = ms.size();
  row.z.resize(n);
  row.d_observed.resize(n);
  row.y.resize(n);
  row.available.resize(n);
  auto git = gen.by_unit.find(u.unit_id);
  const std::vector<double>* g = git == gen.by_unit.end() ? nullptr : &git->second;
  for (size_t h = 0; h < n; ++h) {
    row.available[h] = mask.available(u.unit_id, ms.timestamps[h]);
    row.d_observed[h] = g && (*g)[h] > mc.dispatch_epsilon ? 1 : 0;
    if (!row.available[h]) {
      row.z[h] = kExcluded;
      row.y[h] = kExcluded;
      continue;
    }
    row.z[h] = discretize(row.d_bar[h], mc.keep_threshold);
    row.y[h] = deviation(row.d_observed[h], row.z[h]);
  }
  return row;
}

// --- Panel CSV --------------------------------------------------------------

inline void write_dispatch_panel(const DispatchPanel& panel, const std::string& path) {
  CsvWriter w(path);
  w.row({"timestamp", "unit_id", "d_bar", "z", "d_observed", "y"});
  auto mark = [](int v) { return v == kExcluded ? std::string("NA") : std::to_string(v); };
  for (const auto& u : panel.units)
    for (size_t h = 0; h < panel.timestamps.size(); ++h) {
      if (!u.available[h]) continue;  // downstream stages only see available hours
      w.row({format_timestamp(panel.timestamps[h]), u.unit_id,
             format_number(u.d_bar[h]), mark(u.z[h]), mark(u.d_observed[h]),
             mark(u.y[h])});
    }
}

}  // namespace mpa
