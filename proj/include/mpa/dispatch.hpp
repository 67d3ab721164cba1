#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "mpa/errors.hpp"

namespace mpa {

// Single-unit profit-maximizing dispatch over a planning horizon. The
// continuous output choice decouples per hour (when on, run at capacity if the
// hour is profitable, else at minimum load), so the on/off sequence is solved
// exactly by a two-state dynamic program with startup cost on off->on edges.

// (fuel + carbon) per MWh thermal, divided by conversion efficiency.
inline double variable_cost(double fuel_cost, double carbon_cost, double efficiency) {
  if (efficiency <= 0) throw DomainError("efficiency must be positive");
  return (fuel_cost + carbon_cost) / efficiency;
}

// K * [depreciation + Q_t * r_t * (fuel + carbon)]
inline double startup_cost(double capacity_mw, double depreciation_eur_mw,
                           double cold_start_fuel, double cold_start_factor,
                           double fuel_plus_carbon) {
  if (capacity_mw < 0 || depreciation_eur_mw < 0 || cold_start_fuel < 0 ||
      cold_start_factor < 0 || fuel_plus_carbon < 0)
    throw DomainError("startup cost inputs must be nonnegative");
  return capacity_mw *
         (depreciation_eur_mw + cold_start_fuel * cold_start_factor * fuel_plus_carbon);
}

struct DispatchProblem {
  std::vector<double> prices;         // p_h, EUR/MWh
  std::vector<double> variable_cost;  // c^var_h, EUR/MWh
  std::vector<double> startup_cost;   // c^start_h, EUR
  double capacity_mw = 0;             // K
  double min_load_mw = 0;             // G^min
  bool initial_on = false;

  void validate() const {
    const size_t n = prices.size();
    if (n == 0) throw DomainError("empty planning horizon");
    if (variable_cost.size() != n || startup_cost.size() != n)
      throw ShapeError("dispatch problem series have unequal lengths");
    if (!(min_load_mw > 0 && min_load_mw < capacity_mw))
      throw DomainError("need 0 < min_load < capacity");
  }
};

struct DispatchSolution {
  std::vector<double> generation;  // MW per hour, in {0, G^min, K}
  std::vector<std::uint8_t> state;    // d-hat
  std::vector<std::uint8_t> startup;  // s
  double objective = 0;               // EUR
};

namespace dispatch_detail {

// Optimal on-state output: capacity when the hour is weakly profitable,
// minimum load otherwise (ties dispatch at capacity).
inline double on_generation(double price, double var_cost, double cap, double min_load) {
  return price >= var_cost ? cap : min_load;
}

// DP over hours [first_free, H). Hour indices below first_free are already
// fixed in `sol` (used for horizon chaining); prev_on is the state entering
// hour first_free.
inline void solve_tail(const DispatchProblem& p, size_t first_free, bool prev_on,
                       DispatchSolution& sol) {
  const size_t n = p.prices.size();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  // value[h][s]: best profit over hours [first_free, h] ending in state s
  std::vector<double> v_off(n - first_free), v_on(n - first_free);
  std::vector<std::uint8_t> from_on_off(n - first_free), from_on_on(n - first_free);

  auto reward_on = [&](size_t h) {
    const double g = on_generation(p.prices[h], p.variable_cost[h], p.capacity_mw,
                                   p.min_load_mw);
    return (p.prices[h] - p.variable_cost[h]) * g;
  };

  for (size_t h = first_free; h < n; ++h) {
    const size_t k = h - first_free;
    const double prev_off = k == 0 ? (prev_on ? kNegInf : 0.0) : v_off[k - 1];
    const double prev_onv = k == 0 ? (prev_on ? 0.0 : kNegInf) : v_on[k - 1];
    // into off
    v_off[k] = prev_off >= prev_onv ? prev_off : prev_onv;
    from_on_off[k] = prev_onv > prev_off;  // tie -> came from off
    // into on: startup charged when previous state is off
    const double via_off = prev_off - p.startup_cost[h];
    const double via_on = prev_onv;
    // tie -> prefer staying on (no startup)
    if (via_on >= via_off) {
      v_on[k] = via_on + reward_on(h);
      from_on_on[k] = 1;
    } else {
      v_on[k] = via_off + reward_on(h);
      from_on_on[k] = 0;
    }
  }

  // backtrack; final-state tie prefers on (tie-break toward dispatch)
  const size_t last = n - 1 - first_free;
  bool cur_on = v_on[last] >= v_off[last];
  for (size_t h = n; h-- > first_free;) {
    const size_t k = h - first_free;
    sol.state[h] = cur_on;
    sol.generation[h] =
        cur_on ? on_generation(p.prices[h], p.variable_cost[h], p.capacity_mw,
                               p.min_load_mw)
               : 0.0;
    const bool came_on = cur_on ? from_on_on[k] : from_on_off[k];
    sol.startup[h] = cur_on && !came_on;
    cur_on = k == 0 ? prev_on : came_on;
  }
}

inline double recompute_objective(const DispatchProblem& p, const DispatchSolution& s) {
  double obj = 0;
  for (size_t h = 0; h < p.prices.size(); ++h)
    obj += (p.prices[h] - p.variable_cost[h]) * s.generation[h] -
           p.startup_cost[h] * s.startup[h];
  return obj;
}

}  // namespace dispatch_detail

inline DispatchSolution solve_horizon(const DispatchProblem& p) {
  p.validate();
  const size_t n = p.prices.size();
  DispatchSolution sol;
  sol.generation.resize(n);
  sol.state.resize(n);
  sol.startup.resize(n);
  dispatch_detail::solve_tail(p, 0, p.initial_on, sol);
  sol.objective = dispatch_detail::recompute_objective(p, sol);
  return sol;
}

// Rolling-horizon solve over a full sample: 744-hour horizons stepped forward
// by 720 hours. The first hour of each horizon after the first is fixed to the
// previous horizon's solution at that hour (its last day's first hour); the
// remaining 23 overlap hours are recomputed.
inline DispatchSolution chain_horizons(const DispatchProblem& full,
                                       size_t horizon_hours = 744,
                                       size_t step_hours = 720) {
  full.validate();
  const size_t n = full.prices.size();
  if (n < 24) throw DomainError("sample shorter than 24 hours");
  if (step_hours + 24 != horizon_hours || step_hours == 0)
    throw DomainError("horizon must exceed step by the one-day overlap");

  DispatchSolution out;
  out.generation.resize(n);
  out.state.resize(n);
  out.startup.resize(n);

  auto slice_problem = [&](size_t begin, size_t end) {
    DispatchProblem p;
    p.prices.assign(full.prices.begin() + begin, full.prices.begin() + end);
    p.variable_cost.assign(full.variable_cost.begin() + begin,
                           full.variable_cost.begin() + end);
    p.startup_cost.assign(full.startup_cost.begin() + begin,
                          full.startup_cost.begin() + end);
    p.capacity_mw = full.capacity_mw;
    p.min_load_mw = full.min_load_mw;
    return p;
  };

  size_t begin = 0;
  bool first = true;
  // carried triple from the previous horizon's local index step_hours
  double carry_g = 0;
  std::uint8_t carry_d = 0, carry_s = 0;
  while (true) {
    const size_t end = std::min(begin + horizon_hours, n);
    const bool last = end == n;
    DispatchProblem p = slice_problem(begin, end);
    DispatchSolution sol;
    sol.generation.resize(p.prices.size());
    sol.state.resize(p.prices.size());
    sol.startup.resize(p.prices.size());
    if (first) {
      p.initial_on = full.initial_on;
      dispatch_detail::solve_tail(p, 0, p.initial_on, sol);
    } else {
      sol.generation[0] = carry_g;
      sol.state[0] = carry_d;
      sol.startup[0] = carry_s;
      dispatch_detail::solve_tail(p, 1, carry_d, sol);
    }
    const size_t keep = last ? end - begin : step_hours;
    for (size_t k = 0; k < keep; ++k) {
      out.generation[begin + k] = sol.generation[k];
      out.state[begin + k] = sol.state[k];
      out.startup[begin + k] = sol.startup[k];
    }
    if (last) break;
    carry_g = sol.generation[step_hours];
    carry_d = sol.state[step_hours];
    carry_s = sol.startup[step_hours];
    begin += step_hours;
    first = false;
  }
  out.objective = dispatch_detail::recompute_objective(full, out);
  return out;
}

}  // namespace mpa
