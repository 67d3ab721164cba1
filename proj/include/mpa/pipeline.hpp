#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mpa/costs.hpp"
#include "mpa/csv.hpp"
#include "mpa/econometrics.hpp"
#include "mpa/errors.hpp"
#include "mpa/hedging.hpp"
#include "mpa/market_data.hpp"
#include "mpa/monte_carlo.hpp"
#include "mpa/supply_curve.hpp"

namespace mpa {

using ordered_json = nlohmann::ordered_json;

// --- Config ------------------------------------------------------------------

struct PipelineConfig {
  std::string market_csv;
  std::string units_csv;
  std::string generation_csv;
  std::string outages_csv;  // optional
  std::string out_dir = "out";
  McConfig mc;
  CostConfig costs;
  size_t max_breakpoints = 11;
  double variance_target = 0.95;
  size_t max_segments = 6;
  std::vector<double> hedge_rates = {1.0};  // first entry is the main rate
  double block_mw = 0;  // 0: per-MW marginal predictors
  BlockMode block_mode = BlockMode::Exact;
  std::vector<Grouping> groupings;
  size_t n_bins = 2000;
  int jobs = 1;
  TimeZone tz = TimeZone::EuropeBerlin;

  void validate() const {
    if (market_csv.empty() || units_csv.empty() || generation_csv.empty())
      throw ConfigError("market_csv, units_csv, and generation_csv are required");
    mc.validate();
    if (hedge_rates.empty()) throw ConfigError("at least one hedge rate is required");
    for (double r : hedge_rates)
      if (!(r >= 0 && r <= 1)) throw ConfigError("hedge rates must lie in [0, 1]");
    if (!(variance_target > 0 && variance_target <= 1))
      throw ConfigError("variance_target must be in (0, 1]");
    if (max_segments < 1) throw ConfigError("max_segments must be >= 1");
    if (n_bins < 1) throw ConfigError("n_bins must be >= 1");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (block_mw < 0) throw ConfigError("block_mw must be >= 0");
  }
};

namespace pipeline_detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  size_t b = s.find_last_not_of(" \t");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': non-numeric value '" + v + "'");
  }
}

}  // namespace pipeline_detail

// Flat key=value config file; '#' starts a comment; unknown keys are errors.
inline PipelineConfig parse_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  PipelineConfig cfg;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = pipeline_detail::trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = pipeline_detail::trim(line.substr(0, eq));
    const std::string val = pipeline_detail::trim(line.substr(eq + 1));
    using pipeline_detail::to_double;
    if (key == "market_csv") cfg.market_csv = val;
    else if (key == "units_csv") cfg.units_csv = val;
    else if (key == "generation_csv") cfg.generation_csv = val;
    else if (key == "outages_csv") cfg.outages_csv = val;
    else if (key == "out_dir") cfg.out_dir = val;
    else if (key == "iterations") cfg.mc.iterations = static_cast<int>(to_double(key, val));
    else if (key == "multiplier_sd") cfg.mc.multiplier_sd = to_double(key, val);
    else if (key == "seed") cfg.mc.seed = static_cast<std::uint64_t>(to_double(key, val));
    else if (key == "keep_threshold") cfg.mc.keep_threshold = to_double(key, val);
    else if (key == "dispatch_epsilon") cfg.mc.dispatch_epsilon = to_double(key, val);
    else if (key == "max_breakpoints") cfg.max_breakpoints = static_cast<size_t>(to_double(key, val));
    else if (key == "variance_target") cfg.variance_target = to_double(key, val);
    else if (key == "max_segments") cfg.max_segments = static_cast<size_t>(to_double(key, val));
    else if (key == "hedge_rates") {
      cfg.hedge_rates.clear();
      for (const auto& s : pipeline_detail::split_list(val))
        cfg.hedge_rates.push_back(to_double(key, s));
    } else if (key == "block_mw") cfg.block_mw = to_double(key, val);
    else if (key == "block_mode") {
      if (val == "exact") cfg.block_mode = BlockMode::Exact;
      else if (val == "marginal_scaled") cfg.block_mode = BlockMode::MarginalScaled;
      else throw ConfigError("block_mode must be exact or marginal_scaled, got '" + val + "'");
    } else if (key == "groupings") {
      cfg.groupings.clear();
      for (const auto& s : pipeline_detail::split_list(val))
        cfg.groupings.push_back(parse_grouping(s));
    } else if (key == "n_bins") cfg.n_bins = static_cast<size_t>(to_double(key, val));
    else if (key == "jobs") cfg.jobs = static_cast<int>(to_double(key, val));
    else if (key == "timezone") cfg.tz = parse_timezone(val);
    else if (key == "lignite_price") cfg.costs.lignite_price = to_double(key, val);
    else throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return cfg;
}

// --- Deterministic parallel map ----------------------------------------------

// Each index writes only its own output slot, so the result is independent of
// scheduling order.
template <typename F>
inline void parallel_for(size_t n, int jobs, F f) {
  if (jobs <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  const size_t k = std::min<size_t>(static_cast<size_t>(jobs), n);
  for (size_t t = 0; t < k; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

// --- Stage error context ------------------------------------------------------

template <typename F>
inline auto run_stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const SeparationError&) {
    throw;  // estimation diagnostic: exit-code class preserved
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("stage ") + name + ": " + e.what());
  } catch (const Error& e) {
    throw Error(std::string("stage ") + name + ": " + e.what());
  }
}

// --- Inputs -------------------------------------------------------------------

struct PipelineInputs {
  MarketSeries market;
  std::vector<UnitSpec> units;
  ObservedGeneration generation;
  OutageMask outages;
};

inline PipelineInputs load_inputs(const PipelineConfig& cfg) {
  PipelineInputs in;
  in.market = load_market(cfg.market_csv);
  in.units = load_units(cfg.units_csv);
  in.generation = load_generation(cfg.generation_csv, in.market);
  if (!cfg.outages_csv.empty()) in.outages = load_outages(cfg.outages_csv);
  availability_filter(in.units, in.market, in.outages);  // validates references
  return in;
}

// --- Dispatch stage -----------------------------------------------------------

inline DispatchPanel stage_dispatch(const PipelineConfig& cfg, const PipelineInputs& in) {
  std::vector<const UnitSpec*> scope;
  for (const auto& u : in.units)
    if (u.in_scope) scope.push_back(&u);
  if (scope.empty()) throw InfeasibleError("no in-scope units to dispatch");
  DispatchPanel panel;
  panel.timestamps = in.market.timestamps;
  panel.units.resize(scope.size());
  parallel_for(scope.size(), cfg.jobs, [&](size_t i) {
    panel.units[i] =
        build_unit_row(*scope[i], in.market, in.generation, in.outages, cfg.costs, cfg.mc);
  });
  write_dispatch_panel(panel, cfg.out_dir + "/dispatch_panel.csv");
  return panel;
}

// Inverse of write_dispatch_panel against a known grid; rows absent from the
// file are the unavailable unit-hours.
inline DispatchPanel read_dispatch_panel(const std::string& path, const MarketSeries& ms,
                                         const std::vector<UnitSpec>& units) {
  const CsvTable t = read_csv(path);
  const int c_ts = t.require_column("timestamp", path);
  const int c_id = t.require_column("unit_id", path);
  const int c_db = t.require_column("d_bar", path);
  const int c_z = t.require_column("z", path);
  const int c_do = t.require_column("d_observed", path);
  const int c_y = t.require_column("y", path);
  DispatchPanel panel;
  panel.timestamps = ms.timestamps;
  std::map<std::string, size_t> idx;
  for (const auto& u : units) {
    if (!u.in_scope) continue;
    idx[u.unit_id] = panel.units.size();
    UnitDispatchRow row;
    row.unit_id = u.unit_id;
    row.d_bar.assign(ms.size(), 0.0);
    row.z.assign(ms.size(), kExcluded);
    row.d_observed.assign(ms.size(), 0);
    row.y.assign(ms.size(), kExcluded);
    row.available.assign(ms.size(), 0);
    panel.units.push_back(std::move(row));
  }
  auto cell = [&](const std::string& s, const std::string& col, size_t r) {
    return s == "NA" ? kExcluded : static_cast<int>(parse_double(s, path, r, col));
  };
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    auto it = idx.find(row[c_id]);
    if (it == idx.end())
      throw ReferenceError(path + ": unknown unit " + row[c_id]);
    const auto h = ms.index_of(parse_timestamp(row[c_ts]));
    if (h < 0)
      throw AlignmentError(path + ": timestamp " + row[c_ts] + " off the market grid");
    UnitDispatchRow& u = panel.units[it->second];
    u.d_bar[h] = parse_double(row[c_db], path, r, "d_bar");
    u.z[h] = cell(row[c_z], "z", r);
    u.d_observed[h] = cell(row[c_do], "d_observed", r);
    u.y[h] = cell(row[c_y], "y", r);
    u.available[h] = 1;
  }
  return panel;
}

// --- Slope stage --------------------------------------------------------------

inline SupplyModel stage_slope(const PipelineConfig& cfg, const PipelineInputs& in) {
  const MarketSeries& ms = in.market;
  const size_t n = ms.size();
  std::vector<double> gas_adj(n), coal_adj(n);
  for (size_t h = 0; h < n; ++h) {
    gas_adj[h] = carbon_adjust(ms.gas_price[h], cfg.costs.ef_gas, ms.carbon_price[h]);
    coal_adj[h] =
        carbon_adjust(ms.coal_price[h], cfg.costs.ef_hard_coal, ms.carbon_price[h]);
  }
  SupplyModel model;
  model.segmentation =
      segment_regimes(gas_adj, coal_adj, cfg.max_breakpoints, cfg.variance_target);
  // A noise-dominated fuel series can saturate the breakpoint budget with
  // slivers too short to carry a curve fit; back the budget off until every
  // regime is long enough.
  constexpr size_t kMinRegimeHours = 10;
  const auto shortest_regime = [](const RegimeSegmentation& s) {
    size_t lo = 0, shortest = std::numeric_limits<size_t>::max();
    for (size_t r = 0; r <= s.breakpoints.size(); ++r) {
      const size_t hi = r < s.breakpoints.size() ? s.breakpoints[r] : s.n_hours;
      shortest = std::min(shortest, hi - lo);
      lo = hi;
    }
    return shortest;
  };
  for (size_t budget = cfg.max_breakpoints;
       budget > 0 && shortest_regime(model.segmentation) < kMinRegimeHours;)
    model.segmentation = segment_regimes(gas_adj, coal_adj, --budget, cfg.variance_target);
  const std::vector<double> resid = residual_load(ms);
  const auto& bps = model.segmentation.breakpoints;
  size_t lo = 0;
  for (size_t r = 0; r <= bps.size(); ++r) {
    const size_t hi = r < bps.size() ? bps[r] : n;
    std::vector<double> p(ms.spot_price.begin() + lo, ms.spot_price.begin() + hi);
    std::vector<double> l(resid.begin() + lo, resid.begin() + hi);
    // shrink the segment budget when a regime is short
    size_t segs = std::min(cfg.max_segments, (hi - lo) / 10);
    if (segs < 1)
      throw InfeasibleError("regime " + std::to_string(r) +
                            " has fewer than 10 hours; cannot fit a supply curve");
    model.fits.push_back(fit_piecewise(p, l, segs));
    lo = hi;
  }

  // plot-ready exports
  {
    CsvWriter w(cfg.out_dir + "/regimes.csv");
    w.row({"regime", "start_timestamp", "end_timestamp", "n_hours", "centroid_gas",
           "centroid_coal", "explained_variance"});
    size_t a = 0;
    for (size_t r = 0; r <= bps.size(); ++r) {
      const size_t b = r < bps.size() ? bps[r] : n;
      w.row({std::to_string(r), format_timestamp(ms.timestamps[a]),
             format_timestamp(ms.timestamps[b - 1] + 1), std::to_string(b - a),
             format_number(model.segmentation.centroids[r].first),
             format_number(model.segmentation.centroids[r].second),
             format_number(model.segmentation.explained_variance)});
      a = b;
    }
  }
  {
    CsvWriter w(cfg.out_dir + "/supply_fits.csv");
    w.row({"regime", "segment", "lower_mw", "upper_mw", "slope", "value_at_lower",
           "sse", "n_observations"});
    for (size_t r = 0; r < model.fits.size(); ++r) {
      const auto& f = model.fits[r];
      for (size_t s = 0; s < f.slopes.size(); ++s) {
        const double lo_mw = s == 0 ? f.left_edge : f.knots[s - 1];
        const std::string hi_mw =
            s < f.knots.size() ? format_number(f.knots[s]) : "inf";
        w.row({std::to_string(r), std::to_string(s), format_number(lo_mw), hi_mw,
               format_number(f.slopes[s]), format_number(f.evaluate(lo_mw)),
               format_number(f.sse), std::to_string(f.n_observations)});
      }
    }
  }
  // exact-precision model for downstream stages
  {
    ordered_json j;
    j["breakpoints"] = model.segmentation.breakpoints;
    ordered_json cents = ordered_json::array();
    for (const auto& c : model.segmentation.centroids)
      cents.push_back({c.first, c.second});
    j["centroids"] = cents;
    j["explained_variance"] = model.segmentation.explained_variance;
    j["n_hours"] = model.segmentation.n_hours;
    ordered_json fits = ordered_json::array();
    for (const auto& f : model.fits) {
      ordered_json jf;
      jf["knots"] = f.knots;
      jf["left_edge"] = f.left_edge;
      jf["intercept"] = f.intercept;
      jf["slopes"] = f.slopes;
      jf["sse"] = f.sse;
      jf["n_observations"] = f.n_observations;
      fits.push_back(std::move(jf));
    }
    j["fits"] = fits;
    std::ofstream out(cfg.out_dir + "/supply_model.json");
    out << j.dump(2) << "\n";
  }
  return model;
}

inline SupplyModel read_supply_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open supply model: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  SupplyModel model;
  model.segmentation.breakpoints = j.at("breakpoints").get<std::vector<size_t>>();
  for (const auto& c : j.at("centroids"))
    model.segmentation.centroids.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
  model.segmentation.explained_variance = j.at("explained_variance").get<double>();
  model.segmentation.n_hours = j.at("n_hours").get<size_t>();
  for (const auto& jf : j.at("fits")) {
    PiecewiseSupplyFit f;
    f.knots = jf.at("knots").get<std::vector<double>>();
    f.left_edge = jf.at("left_edge").get<double>();
    f.intercept = jf.at("intercept").get<double>();
    f.slopes = jf.at("slopes").get<std::vector<double>>();
    f.sse = jf.at("sse").get<double>();
    f.n_observations = jf.at("n_observations").get<size_t>();
    model.fits.push_back(std::move(f));
  }
  return model;
}

// --- Incentive stage ----------------------------------------------------------

inline IncentivePanel build_incentive_panel(const PipelineConfig& cfg,
                                            const PipelineInputs& in,
                                            const SupplyModel& model,
                                            double hedge_rate) {
  const MarketSeries& ms = in.market;
  const size_t n = ms.size();
  auto company_gen = company_generation(in.units, in.generation, n);
  for (const auto& u : in.units)
    if (u.in_scope && !company_gen.count(u.company_id))
      company_gen[u.company_id].assign(n, 0.0);
  const HedgeBook book = build_hedge_book(company_gen, ms.timestamps, hedge_rate, cfg.tz);
  const std::vector<double> resid = residual_load(ms);

  IncentivePanel panel;
  panel.timestamps = ms.timestamps;
  for (const auto& u : in.units) {
    if (!u.in_scope) continue;
    UnitIncentiveRow row;
    row.unit_id = u.unit_id;
    row.delta.resize(n);
    row.exposure.resize(n);
    row.margin.resize(n);
    row.pi_w.resize(n);
    row.pi_p.resize(n);
    const std::vector<double> cvar = nominal_variable_cost(u, ms, cfg.costs);
    const auto& cg = company_gen.at(u.company_id);
    for (size_t h = 0; h < n; ++h) {
      row.delta[h] = model.delta_at(h, resid[h]);
      row.exposure[h] =
          net_exposure(cg[h], book.hedged_quantity(u.company_id, ms.timestamps[h]));
      row.margin[h] = margin(ms.spot_price[h], cvar[h]);
      row.pi_w[h] = net_profit_withhold(row.delta[h], row.exposure[h], row.margin[h]);
      row.pi_p[h] = net_profit_pushin(row.delta[h], row.exposure[h], row.margin[h]);
    }
    panel.units.push_back(std::move(row));
  }
  return panel;
}

inline IncentivePanel stage_incentives(const PipelineConfig& cfg,
                                       const PipelineInputs& in,
                                       const SupplyModel& model) {
  IncentivePanel panel = build_incentive_panel(cfg, in, model, cfg.hedge_rates.front());
  write_incentive_panel(panel, cfg.out_dir + "/incentive_panel.csv");
  return panel;
}

inline IncentivePanel read_incentive_panel(const std::string& path,
                                           const MarketSeries& ms) {
  const CsvTable t = read_csv(path);
  const int c_ts = t.require_column("timestamp", path);
  const int c_id = t.require_column("unit_id", path);
  const int c_d = t.require_column("delta", path);
  const int c_e = t.require_column("exposure_mw", path);
  const int c_m = t.require_column("margin", path);
  const int c_w = t.require_column("pi_w", path);
  const int c_p = t.require_column("pi_p", path);
  IncentivePanel panel;
  panel.timestamps = ms.timestamps;
  std::map<std::string, size_t> idx;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    auto [it, fresh] = idx.try_emplace(row[c_id], panel.units.size());
    if (fresh) {
      UnitIncentiveRow u;
      u.unit_id = row[c_id];
      u.delta.assign(ms.size(), 0.0);
      u.exposure.assign(ms.size(), 0.0);
      u.margin.assign(ms.size(), 0.0);
      u.pi_w.assign(ms.size(), 0.0);
      u.pi_p.assign(ms.size(), 0.0);
      panel.units.push_back(std::move(u));
    }
    const auto h = ms.index_of(parse_timestamp(row[c_ts]));
    if (h < 0)
      throw AlignmentError(path + ": timestamp " + row[c_ts] + " off the market grid");
    UnitIncentiveRow& u = panel.units[it->second];
    u.delta[h] = parse_double(row[c_d], path, r, "delta");
    u.exposure[h] = parse_double(row[c_e], path, r, "exposure_mw");
    u.margin[h] = parse_double(row[c_m], path, r, "margin");
    u.pi_w[h] = parse_double(row[c_w], path, r, "pi_w");
    u.pi_p[h] = parse_double(row[c_p], path, r, "pi_p");
  }
  return panel;
}

// --- Fit stage ----------------------------------------------------------------

// Predictor under the configured block size: per-MW when block_mw == 0,
// otherwise the finite-block profit expressed through (pi, delta).
inline double block_predictor(double pi, double delta, double q, BlockMode mode) {
  if (q <= 0) return pi;
  return mode == BlockMode::Exact ? q * pi - delta * q * q : q * pi;
}

inline RegimeSplitFit split_fit(const std::vector<PanelObs>& obs, double block_mw,
                                BlockMode mode) {
  RegimeSplitFit r;
  r.withhold = fit_one_regime(obs, 1, -1, [&](const PanelObs& o) {
    return block_predictor(o.pi_w, o.delta, block_mw, mode);
  });
  r.pushin = fit_one_regime(obs, 0, 1, [&](const PanelObs& o) {
    return block_predictor(o.pi_p, o.delta, block_mw, mode);
  });
  return r;
}

struct FitBundle {
  std::vector<PanelObs> obs;  // main-rate joined panel, per-MW incentives
  RegimeSplitFit main;
  // grouping name -> group key -> fits
  std::map<std::string, std::map<std::string, RegimeSplitFit>> groups;
  std::vector<std::pair<double, RegimeSplitFit>> hedge_table;
};

namespace pipeline_detail {

inline ordered_json fit_json(const std::string& regime, const std::string& group,
                             double hedge_rate, const RegimeFit& rf) {
  ordered_json j;
  j["regime"] = regime;
  j["group"] = group;
  j["hedge_rate"] = hedge_rate;
  j["n"] = rf.n;
  if (rf.fit) {
    const LogitFit& f = *rf.fit;
    j["beta0"] = f.beta0;
    j["beta1"] = f.beta1;
    j["se0"] = f.se0;
    j["se1"] = f.se1;
    j["ll"] = f.log_likelihood;
    j["ll0"] = f.null_log_likelihood;
    j["mcfadden_r2"] = f.mcfadden_r2;
    j["converged"] = f.converged;
    j["stars"] = significance_stars(f.beta1, f.se1);
  } else {
    j["diagnostic"] = rf.diagnostic;
  }
  return j;
}

inline std::string grouping_name(Grouping g) {
  switch (g) {
    case Grouping::Year: return "year";
    case Grouping::FuelType: return "fuel_type";
    case Grouping::Company: return "company";
  }
  return "?";
}

}  // namespace pipeline_detail

inline FitBundle stage_fit(const PipelineConfig& cfg, const PipelineInputs& in,
                           const DispatchPanel& dp, const IncentivePanel& ip_main,
                           const SupplyModel& model) {
  FitBundle bundle;
  bundle.obs = join_panels(dp, ip_main, in.units, in.market, cfg.tz);
  bundle.main = split_fit(bundle.obs, cfg.block_mw, cfg.block_mode);

  for (Grouping g : cfg.groupings) {
    std::map<std::string, std::vector<PanelObs>> parts;
    for (const auto& o : bundle.obs) parts[group_key(o, g)].push_back(o);
    auto& dst = bundle.groups[pipeline_detail::grouping_name(g)];
    for (const auto& [key, part] : parts)
      dst[key] = split_fit(part, cfg.block_mw, cfg.block_mode);
  }

  for (size_t i = 0; i < cfg.hedge_rates.size(); ++i) {
    const double r = cfg.hedge_rates[i];
    if (i == 0) {
      bundle.hedge_table.push_back({r, bundle.main});
      continue;
    }
    const IncentivePanel ip = build_incentive_panel(cfg, in, model, r);
    const auto obs = join_panels(dp, ip, in.units, in.market, cfg.tz);
    bundle.hedge_table.push_back({r, split_fit(obs, cfg.block_mw, cfg.block_mode)});
  }

  ordered_json j;
  ordered_json models = ordered_json::array();
  const double r0 = cfg.hedge_rates.front();
  models.push_back(pipeline_detail::fit_json("withhold", "all", r0, bundle.main.withhold));
  models.push_back(pipeline_detail::fit_json("pushin", "all", r0, bundle.main.pushin));
  for (const auto& [gname, keys] : bundle.groups)
    for (const auto& [key, fits] : keys) {
      const std::string group = gname + "=" + key;
      models.push_back(pipeline_detail::fit_json("withhold", group, r0, fits.withhold));
      models.push_back(pipeline_detail::fit_json("pushin", group, r0, fits.pushin));
    }
  for (size_t i = 1; i < bundle.hedge_table.size(); ++i) {
    const auto& [r, fits] = bundle.hedge_table[i];
    models.push_back(pipeline_detail::fit_json("withhold", "all", r, fits.withhold));
    models.push_back(pipeline_detail::fit_json("pushin", "all", r, fits.pushin));
  }
  j["models"] = models;
  std::ofstream out(cfg.out_dir + "/fits.json");
  out << j.dump(2) << "\n";
  return bundle;
}

// --- Report stage -------------------------------------------------------------

struct QuantileSummary {
  double min = 0, q50 = 0, q90 = 0, q99 = 0, max = 0;
  size_t n = 0;
};

inline QuantileSummary summary_quantiles(std::vector<double> v) {
  if (v.empty()) throw InfeasibleError("quantiles of an empty panel");
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    return v[static_cast<size_t>(std::llround(p * (v.size() - 1)))];
  };
  return {v.front(), q(0.5), q(0.9), q(0.99), v.back(), v.size()};
}

struct CurveBin {
  double mean_pi = 0;
  double empirical = 0;
  double predicted = 0;
  size_t n = 0;
};

// Equal-count bins along the predictor, with observed frequency and mean
// fitted probability per bin.
inline std::vector<CurveBin> bin_curve(const std::vector<double>& pi,
                                       const std::vector<int>& outcome,
                                       const LogitFit& fit, size_t n_bins) {
  const size_t n = pi.size();
  if (outcome.size() != n) throw ShapeError("predictor/outcome length mismatch");
  if (n_bins == 0 || n_bins > n)
    throw InfeasibleError("bin count " + std::to_string(n_bins) +
                          " exceeds the " + std::to_string(n) + " observations");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return pi[a] < pi[b]; });
  std::vector<CurveBin> bins(n_bins);
  for (size_t b = 0; b < n_bins; ++b) {
    const size_t lo = b * n / n_bins;
    const size_t hi = (b + 1) * n / n_bins;
    CurveBin& bin = bins[b];
    bin.n = hi - lo;
    for (size_t i = lo; i < hi; ++i) {
      const size_t k = order[i];
      bin.mean_pi += pi[k];
      bin.empirical += outcome[k];
      bin.predicted += predict_prob(fit, pi[k]);
    }
    bin.mean_pi /= bin.n;
    bin.empirical /= bin.n;
    bin.predicted /= bin.n;
  }
  return bins;
}

struct ImpactRow {
  std::string period;  // civil year or "all"
  double expected_withheld_mwh = 0;
  double expected_pushed_mwh = 0;
  double load_total_mwh = 0;
  double load_eligible_withhold_mwh = 0;
  double load_eligible_pushin_mwh = 0;
  double withheld_share_of_total_load = 0;
  double withheld_share_of_eligible_load = 0;
  double pushed_share_of_total_load = 0;
  double pushed_share_of_eligible_load = 0;
  double price_up_mean = 0;    // mean hourly spot increase from withholding
  double price_up_max = 0;
  double price_down_mean = 0;  // mean hourly spot decrease from push-in
  double price_down_min = 0;
};

// Model-predicted deviation volumes and implied price impact. The "relative
// to load" denominator is ambiguous between total load and load in eligible
// hours, so both shares are emitted, labeled.
inline std::vector<ImpactRow> expected_impact(const std::vector<PanelObs>& obs,
                                              const RegimeSplitFit& fits,
                                              const MarketSeries& ms,
                                              const PipelineConfig& cfg) {
  const size_t n = ms.size();
  std::vector<double> wmw(n, 0.0), pmw(n, 0.0), delta(n, 0.0);
  std::vector<std::uint8_t> has_w(n, 0), has_p(n, 0);
  for (const auto& o : obs) {
    delta[o.hour] = o.delta;
    if (o.z == 1 && fits.withhold.fit) {
      const double x = block_predictor(o.pi_w, o.delta, cfg.block_mw, cfg.block_mode);
      wmw[o.hour] += predict_prob(*fits.withhold.fit, x) * o.capacity_mw;
      has_w[o.hour] = 1;
    }
    if (o.z == 0 && fits.pushin.fit) {
      const double x = block_predictor(o.pi_p, o.delta, cfg.block_mw, cfg.block_mode);
      pmw[o.hour] += predict_prob(*fits.pushin.fit, x) * o.capacity_mw;
      has_p[o.hour] = 1;
    }
  }

  std::map<std::string, std::vector<size_t>> periods;
  for (size_t h = 0; h < n; ++h)
    periods[std::to_string(civil_year(ms.timestamps[h], cfg.tz))].push_back(h);
  {
    std::vector<size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    periods["all"] = std::move(all);
  }

  std::vector<ImpactRow> rows;
  for (const auto& [period, hours] : periods) {
    ImpactRow r;
    r.period = period;
    size_t nw = 0, np = 0;
    for (size_t h : hours) {
      r.load_total_mwh += ms.demand[h];
      r.expected_withheld_mwh += wmw[h];
      r.expected_pushed_mwh += pmw[h];
      if (has_w[h]) {
        r.load_eligible_withhold_mwh += ms.demand[h];
        const double up = delta[h] * wmw[h];
        r.price_up_mean += up;
        r.price_up_max = std::max(r.price_up_max, up);
        ++nw;
      }
      if (has_p[h]) {
        r.load_eligible_pushin_mwh += ms.demand[h];
        const double down = -delta[h] * pmw[h];
        r.price_down_mean += down;
        r.price_down_min = std::min(r.price_down_min, down);
        ++np;
      }
    }
    if (nw) r.price_up_mean /= nw;
    if (np) r.price_down_mean /= np;
    if (r.load_total_mwh > 0) {
      r.withheld_share_of_total_load = r.expected_withheld_mwh / r.load_total_mwh;
      r.pushed_share_of_total_load = r.expected_pushed_mwh / r.load_total_mwh;
    }
    if (r.load_eligible_withhold_mwh > 0)
      r.withheld_share_of_eligible_load =
          r.expected_withheld_mwh / r.load_eligible_withhold_mwh;
    if (r.load_eligible_pushin_mwh > 0)
      r.pushed_share_of_eligible_load = r.expected_pushed_mwh / r.load_eligible_pushin_mwh;
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace pipeline_detail {

inline ordered_json quantile_json(const QuantileSummary& q) {
  ordered_json j;
  j["min"] = q.min;
  j["q50"] = q.q50;
  j["q90"] = q.q90;
  j["q99"] = q.q99;
  j["max"] = q.max;
  j["n"] = q.n;
  return j;
}

inline void write_bins_csv(const std::vector<CurveBin>& bins, const std::string& path) {
  CsvWriter w(path);
  w.row({"mean_pi", "empirical_frequency", "predicted_probability", "n"});
  for (const auto& b : bins)
    w.row({format_number(b.mean_pi), format_number(b.empirical),
           format_number(b.predicted), std::to_string(b.n)});
}

}  // namespace pipeline_detail

inline void stage_report(const PipelineConfig& cfg, const PipelineInputs& in,
                         const IncentivePanel& ip, const FitBundle& bundle) {
  ordered_json j;

  // Table-1-style quantiles: full panel and opportunity-conditioned
  {
    std::vector<double> w_full, p_full, w_opp, p_opp;
    for (const auto& u : ip.units) {
      w_full.insert(w_full.end(), u.pi_w.begin(), u.pi_w.end());
      p_full.insert(p_full.end(), u.pi_p.begin(), u.pi_p.end());
    }
    for (const auto& o : bundle.obs) {
      if (o.z == 1) w_opp.push_back(o.pi_w);
      if (o.z == 0) p_opp.push_back(o.pi_p);
    }
    ordered_json q;
    q["withhold_full_panel"] = pipeline_detail::quantile_json(summary_quantiles(w_full));
    q["pushin_full_panel"] = pipeline_detail::quantile_json(summary_quantiles(p_full));
    if (!w_opp.empty())
      q["withhold_opportunity"] = pipeline_detail::quantile_json(summary_quantiles(w_opp));
    if (!p_opp.empty())
      q["pushin_opportunity"] = pipeline_detail::quantile_json(summary_quantiles(p_opp));
    j["net_profit_quantiles"] = q;
  }

  // deviation split over eligible unit-hours
  {
    size_t n_w = 0, n_none = 0, n_p = 0;
    for (const auto& o : bundle.obs) {
      if (o.y == -1) ++n_w;
      else if (o.y == 1) ++n_p;
      else ++n_none;
    }
    const double total = static_cast<double>(bundle.obs.size());
    ordered_json d;
    d["n_eligible"] = bundle.obs.size();
    d["withhold_share"] = total > 0 ? n_w / total : 0.0;
    d["conform_share"] = total > 0 ? n_none / total : 0.0;
    d["pushin_share"] = total > 0 ? n_p / total : 0.0;
    j["deviation_split"] = d;
  }

  // calibration bins per regime (bin count clamped to the data)
  {
    auto emit = [&](int regime, int dev, const RegimeFit& rf, const char* file,
                    const char* key) {
      if (!rf.fit) {
        j["bins"][key] = {{"skipped", rf.diagnostic}};
        return;
      }
      std::vector<double> x;
      std::vector<int> yy;
      for (const auto& o : bundle.obs) {
        if (o.z != regime) continue;
        x.push_back(block_predictor(regime == 1 ? o.pi_w : o.pi_p, o.delta,
                                    cfg.block_mw, cfg.block_mode));
        yy.push_back(o.y == dev ? 1 : 0);
      }
      if (x.empty()) {
        j["bins"][key] = {{"skipped", "empty regime"}};
        return;
      }
      const size_t bins = std::min(cfg.n_bins, x.size());
      pipeline_detail::write_bins_csv(bin_curve(x, yy, *rf.fit, bins),
                                      cfg.out_dir + "/" + file);
      j["bins"][key] = {{"file", file}, {"n_bins", bins}};
    };
    emit(1, -1, bundle.main.withhold, "bins_withhold.csv", "withhold");
    emit(0, 1, bundle.main.pushin, "bins_pushin.csv", "pushin");
  }

  // expected market impact
  {
    const auto rows = expected_impact(bundle.obs, bundle.main, in.market, cfg);
    CsvWriter w(cfg.out_dir + "/impact.csv");
    w.row({"period", "expected_withheld_mwh", "expected_pushed_mwh", "load_total_mwh",
           "load_eligible_withhold_mwh", "load_eligible_pushin_mwh",
           "withheld_share_of_total_load", "withheld_share_of_eligible_load",
           "pushed_share_of_total_load", "pushed_share_of_eligible_load",
           "price_up_mean", "price_up_max", "price_down_mean", "price_down_min"});
    ordered_json impact = ordered_json::array();
    for (const auto& r : rows) {
      w.row({r.period, format_number(r.expected_withheld_mwh),
             format_number(r.expected_pushed_mwh), format_number(r.load_total_mwh),
             format_number(r.load_eligible_withhold_mwh),
             format_number(r.load_eligible_pushin_mwh),
             format_number(r.withheld_share_of_total_load),
             format_number(r.withheld_share_of_eligible_load),
             format_number(r.pushed_share_of_total_load),
             format_number(r.pushed_share_of_eligible_load),
             format_number(r.price_up_mean), format_number(r.price_up_max),
             format_number(r.price_down_mean), format_number(r.price_down_min)});
      ordered_json ji;
      ji["period"] = r.period;
      ji["expected_withheld_mwh"] = r.expected_withheld_mwh;
      ji["expected_pushed_mwh"] = r.expected_pushed_mwh;
      ji["withheld_share_of_total_load"] = r.withheld_share_of_total_load;
      ji["withheld_share_of_eligible_load"] = r.withheld_share_of_eligible_load;
      ji["pushed_share_of_total_load"] = r.pushed_share_of_total_load;
      ji["pushed_share_of_eligible_load"] = r.pushed_share_of_eligible_load;
      ji["price_up_mean"] = r.price_up_mean;
      ji["price_up_max"] = r.price_up_max;
      ji["price_down_mean"] = r.price_down_mean;
      ji["price_down_min"] = r.price_down_min;
      impact.push_back(std::move(ji));
    }
    j["expected_impact"] = impact;
  }

  std::ofstream out(cfg.out_dir + "/summary.json");
  out << j.dump(2) << "\n";
}

// --- Full pipeline ------------------------------------------------------------

struct PipelineResult {
  PipelineInputs inputs;
  DispatchPanel dispatch;
  SupplyModel supply;
  IncentivePanel incentives;
  FitBundle fits;
};

inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  PipelineResult r;
  r.inputs = run_stage("ingest", [&] { return load_inputs(cfg); });
  r.dispatch = run_stage("dispatch", [&] { return stage_dispatch(cfg, r.inputs); });
  r.supply = run_stage("slope", [&] { return stage_slope(cfg, r.inputs); });
  r.incentives =
      run_stage("incentives", [&] { return stage_incentives(cfg, r.inputs, r.supply); });
  // downstream stages consume the emitted panels, not in-memory state, so a
  // rerun from any cached intermediate reproduces the same outputs
  const DispatchPanel dp = run_stage("fit", [&] {
    return read_dispatch_panel(cfg.out_dir + "/dispatch_panel.csv", r.inputs.market,
                               r.inputs.units);
  });
  const IncentivePanel ip = run_stage("fit", [&] {
    return read_incentive_panel(cfg.out_dir + "/incentive_panel.csv", r.inputs.market);
  });
  const SupplyModel model = run_stage("fit", [&] {
    return read_supply_model(cfg.out_dir + "/supply_model.json");
  });
  r.fits = run_stage("fit", [&] { return stage_fit(cfg, r.inputs, dp, ip, model); });
  run_stage("report", [&] {
    stage_report(cfg, r.inputs, ip, r.fits);
    return 0;
  });
  return r;
}

}  // namespace mpa
