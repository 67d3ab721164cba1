#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpa/costs.hpp"
#include "mpa/dispatch.hpp"
#include "mpa/hedging.hpp"
#include "mpa/logit.hpp"
#include "mpa/market_data.hpp"
#include "mpa/rng.hpp"
#include "mpa/time.hpp"

namespace mpa {

// Sentinel for "deviation probability exactly zero".
constexpr double kNoDeviation = -1e30;

struct SynthConfig {
  size_t n_units = 40;
  size_t n_companies = 8;
  size_t sample_hours = 8760;
  EpochHour start = 464592;  // 2023-01-01T00:00:00Z

  // fuel-price regime schedule: plateau levels with change hours
  std::vector<size_t> regime_change_hours = {3000, 6000};
  std::vector<double> gas_levels = {25, 45, 32};
  std::vector<double> coal_levels = {12, 22, 16};
  double carbon_level = 80;
  double fuel_noise_sd = 0.5;

  // residual load process
  double load_base = 45000;
  double load_daily_amp = 9000;
  double load_weekly_amp = 3000;
  double load_noise_sd = 1500;
  double vre_base = 15000;

  // supply-curve ground truth: shared shape, regime-specific price level
  std::vector<double> curve_knots = {40000, 55000};
  std::vector<double> curve_slopes = {0.0015, 0.004, 0.012};
  double price_noise_sd = 2.0;

  // fleet shape
  double capacity_min_mw = 200;
  double capacity_max_mw = 900;

  double hedge_rate_true = 1.0;

  // planted deviation law (Eq.-style logistic in the net profit)
  double beta0_w = -1.166;
  double beta1_w = 0.0102;
  double beta0_p = -0.9327;
  double beta1_p = 0.0034;

  std::uint64_t seed = 1;

  void validate() const {
    if (n_units < 1 || n_companies < 1 || sample_hours < 24)
      throw ConfigError("synth: counts too small");
    if (gas_levels.size() != regime_change_hours.size() + 1 ||
        coal_levels.size() != gas_levels.size())
      throw ConfigError("synth: regime schedule lengths mismatch");
    if (curve_slopes.size() != curve_knots.size() + 1)
      throw ConfigError("synth: curve knots/slopes mismatch");
    for (double s : curve_slopes)
      if (s < 0) throw ConfigError("synth: negative planted slope");
    if (!(capacity_min_mw > 0 && capacity_min_mw < capacity_max_mw))
      throw ConfigError("synth: need 0 < capacity_min_mw < capacity_max_mw");
  }
};

struct GroundTruth {
  // per in-scope unit, aligned to the market grid
  std::map<std::string, std::vector<std::uint8_t>> competitive_state;
  std::map<std::string, std::vector<double>> competitive_generation;
  std::map<std::string, std::vector<double>> pi_w;
  std::map<std::string, std::vector<double>> pi_p;
  std::map<std::string, std::vector<std::int8_t>> deviation;  // -1/0/+1 planted
  std::vector<double> true_delta;                             // per hour
  double beta0_w = 0, beta1_w = 0, beta0_p = 0, beta1_p = 0;
  size_t n_withheld = 0, n_pushed = 0;
};

struct SynthMarket {
  MarketSeries market;
  std::vector<UnitSpec> units;
  ObservedGeneration generation;
  OutageMask outages;  // empty: all available
  GroundTruth truth;
};

namespace synth_detail {

inline size_t regime_index(const SynthConfig& cfg, size_t h) {
  size_t r = 0;
  while (r < cfg.regime_change_hours.size() && h >= cfg.regime_change_hours[r]) ++r;
  return r;
}

inline double planted_curve(const SynthConfig& cfg, size_t regime, double l) {
  // price level anchored to the regime's carbon-adjusted gas cost at a
  // reference efficiency, so fuel regimes shift the whole curve
  const double anchor =
      (cfg.gas_levels[regime] + 0.202 * cfg.carbon_level) / 0.5;
  double p = anchor;
  double prev = 30000.0;  // reference abscissa of the first planted segment
  for (size_t j = 0; j < cfg.curve_slopes.size(); ++j) {
    const double hi = j < cfg.curve_knots.size()
                          ? cfg.curve_knots[j]
                          : std::numeric_limits<double>::infinity();
    if (j == 0)
      p += cfg.curve_slopes[0] * (std::min(l, hi) - prev);
    else
      p += cfg.curve_slopes[j] * std::max(0.0, std::min(l, hi) - prev);
    prev = hi;
  }
  return p;
}

inline double planted_slope(const SynthConfig& cfg, double l) {
  size_t j = 0;
  while (j < cfg.curve_knots.size() && l >= cfg.curve_knots[j]) ++j;
  return cfg.curve_slopes[j];
}

}  // namespace synth_detail

// Deterministic synthetic fleet: fuel mix and cost spread chosen so that both
// benchmark regimes are well populated.
inline std::vector<UnitSpec> synth_fleet(const SynthConfig& cfg) {
  std::vector<UnitSpec> units;
  for (size_t i = 0; i < cfg.n_units; ++i) {
    UnitSpec u;
    u.unit_id = "U" + std::to_string(i + 1);
    u.company_id = "C" + std::to_string(i % cfg.n_companies + 1);
    const double frac = cfg.n_units == 1 ? 0.5 : double(i) / (cfg.n_units - 1);
    switch (i % 4) {
      case 0:
        u.fuel_type = FuelType::Lignite;
        u.efficiency = 0.36 + 0.06 * frac;
        break;
      case 1:
        u.fuel_type = FuelType::HardCoal;
        u.efficiency = 0.36 + 0.08 * frac;
        break;
      case 2:
        u.fuel_type = FuelType::Ccgt;
        u.efficiency = 0.48 + 0.12 * frac;
        break;
      default:
        u.fuel_type = FuelType::GasOther;
        u.efficiency = 0.33 + 0.08 * frac;
        break;
    }
    u.capacity_mw = cfg.capacity_min_mw + (cfg.capacity_max_mw - cfg.capacity_min_mw) *
                                              uniform01(mix_key(cfg.seed, 1000 + i));
    u.min_load_mw = u.capacity_mw * (0.25 + 0.15 * uniform01(mix_key(cfg.seed, 2000 + i)));
    u.startup_depreciation = 20 + 30 * uniform01(mix_key(cfg.seed, 3000 + i));
    u.cold_start_fuel = 1.5 + 2.0 * uniform01(mix_key(cfg.seed, 4000 + i));
    u.cold_start_factor = 1.0;
    u.validate();
    units.push_back(std::move(u));
  }
  return units;
}

// Flip competitive states into observed deviations following the planted
// logistic law. beta0 = kNoDeviation plants nothing.
inline void plant_deviations(const SynthConfig& cfg, const std::vector<UnitSpec>& units,
                             GroundTruth& truth, ObservedGeneration& gen) {
  for (const auto& u : units) {
    const auto& state = truth.competitive_state[u.unit_id];
    const auto& comp_g = truth.competitive_generation[u.unit_id];
    const auto& pw = truth.pi_w[u.unit_id];
    const auto& pp = truth.pi_p[u.unit_id];
    auto& g = gen.by_unit[u.unit_id];
    auto& dev = truth.deviation[u.unit_id];
    g = comp_g;
    dev.assign(state.size(), 0);
    const std::uint64_t uh = hash_string(u.unit_id);
    for (size_t h = 0; h < state.size(); ++h) {
      const double roll = uniform01(mix_key(cfg.seed ^ 0xdeu, uh, h, 77));
      if (state[h]) {
        if (cfg.beta0_w <= kNoDeviation) continue;
        const double p = logistic(cfg.beta0_w + cfg.beta1_w * pw[h]);
        if (roll < p) {
          g[h] = 0.0;  // withheld
          dev[h] = -1;
          ++truth.n_withheld;
        }
      } else {
        if (cfg.beta0_p <= kNoDeviation) continue;
        const double p = logistic(cfg.beta0_p + cfg.beta1_p * pp[h]);
        if (roll < p) {
          g[h] = u.min_load_mw;  // pushed in at minimum load
          dev[h] = 1;
          ++truth.n_pushed;
        }
      }
    }
  }
}

inline SynthMarket generate_market(const SynthConfig& cfg) {
  cfg.validate();
  SynthMarket out;
  const size_t n = cfg.sample_hours;

  // market series
  MarketSeries& ms = out.market;
  std::vector<double> resid(n);
  for (size_t h = 0; h < n; ++h) {
    ms.timestamps.push_back(cfg.start + static_cast<EpochHour>(h));
    const size_t r = synth_detail::regime_index(cfg, h);
    const double gas =
        cfg.gas_levels[r] + cfg.fuel_noise_sd * normal01(mix_key(cfg.seed, 1, h));
    const double coal =
        cfg.coal_levels[r] + cfg.fuel_noise_sd * normal01(mix_key(cfg.seed, 2, h));
    ms.gas_price.push_back(std::max(0.0, gas));
    ms.coal_price.push_back(std::max(0.0, coal));
    ms.carbon_price.push_back(cfg.carbon_level);
    const double l = cfg.load_base +
                     cfg.load_daily_amp * std::sin(2 * M_PI * (h % 24) / 24.0 - 1.0) +
                     cfg.load_weekly_amp * std::sin(2 * M_PI * (h % 168) / 168.0) +
                     cfg.load_noise_sd * normal01(mix_key(cfg.seed, 3, h));
    resid[h] = l;
    const double vre = cfg.vre_base * (0.6 + 0.4 * std::sin(2 * M_PI * (h % 24) / 24.0));
    ms.vre_generation.push_back(std::max(0.0, vre));
    ms.demand.push_back(std::max(0.0, l + ms.vre_generation.back()));
    const double price =
        synth_detail::planted_curve(cfg, r, l) +
        cfg.price_noise_sd * normal01(mix_key(cfg.seed, 4, h));
    ms.spot_price.push_back(price);
  }
  // demand floor may distort residual load at the extreme low end; recompute
  // the generator's own view of l from the emitted columns for consistency
  for (size_t h = 0; h < n; ++h) resid[h] = ms.demand[h] - ms.vre_generation[h];
  ms.validate();

  out.units = synth_fleet(cfg);

  GroundTruth& truth = out.truth;
  truth.beta0_w = cfg.beta0_w;
  truth.beta1_w = cfg.beta1_w;
  truth.beta0_p = cfg.beta0_p;
  truth.beta1_p = cfg.beta1_p;
  truth.true_delta.resize(n);
  for (size_t h = 0; h < n; ++h)
    truth.true_delta[h] = synth_detail::planted_slope(cfg, resid[h]);

  // competitive dispatch at nominal parameters
  CostConfig cc;
  for (const auto& u : out.units) {
    const DispatchProblem p = unit_dispatch_problem(u, ms, cc);
    const DispatchSolution sol = chain_horizons(p);
    truth.competitive_state[u.unit_id] = sol.state;
    truth.competitive_generation[u.unit_id] = sol.generation;
  }

  // hedge book on competitive company generation
  std::map<std::string, std::vector<double>> comp_company;
  for (const auto& u : out.units) {
    auto& v = comp_company[u.company_id];
    if (v.empty()) v.assign(n, 0.0);
    const auto& g = truth.competitive_generation[u.unit_id];
    for (size_t h = 0; h < n; ++h) v[h] += g[h];
  }
  const HedgeBook book =
      build_hedge_book(comp_company, ms.timestamps, cfg.hedge_rate_true);

  // planted incentives
  for (const auto& u : out.units) {
    const auto cvar = nominal_variable_cost(u, ms, cc);
    auto& pw = truth.pi_w[u.unit_id];
    auto& pp = truth.pi_p[u.unit_id];
    pw.resize(n);
    pp.resize(n);
    const auto& cg = comp_company[u.company_id];
    for (size_t h = 0; h < n; ++h) {
      const double e =
          net_exposure(cg[h], book.hedged_quantity(u.company_id, ms.timestamps[h]));
      const double m = margin(ms.spot_price[h], cvar[h]);
      pw[h] = net_profit_withhold(truth.true_delta[h], e, m);
      pp[h] = net_profit_pushin(truth.true_delta[h], e, m);
    }
  }

  plant_deviations(cfg, out.units, truth, out.generation);
  return out;
}

// Write the standard input bundle plus the ground-truth record.
inline void write_synth_market(const SynthMarket& m, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_market(m.market, dir + "/market.csv");
  write_units(m.units, dir + "/units.csv");
  write_generation(m.generation, m.market, dir + "/generation.csv");
  write_outages(m.outages, dir + "/outages.csv");
  nlohmann::ordered_json j;
  j["beta0_w"] = m.truth.beta0_w;
  j["beta1_w"] = m.truth.beta1_w;
  j["beta0_p"] = m.truth.beta0_p;
  j["beta1_p"] = m.truth.beta1_p;
  j["n_withheld"] = m.truth.n_withheld;
  j["n_pushed"] = m.truth.n_pushed;
  nlohmann::ordered_json per_unit;
  for (const auto& [unit, dev] : m.truth.deviation) {
    size_t w = 0, p = 0;
    for (auto d : dev) {
      w += d == -1;
      p += d == 1;
    }
    per_unit[unit] = {{"withheld_hours", w}, {"pushed_hours", p}};
  }
  j["units"] = per_unit;
  std::ofstream out(dir + "/ground_truth.json");
  out << j.dump(2) << "\n";
}

}  // namespace mpa
