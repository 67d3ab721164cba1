#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "mpa/csv.hpp"
#include "mpa/errors.hpp"

namespace mpa {

// Carbon-adjusted thermal fuel price: fuel + emission_factor * carbon.
inline double carbon_adjust(double fuel_price, double emission_factor,
                            double carbon_price) {
  if (emission_factor < 0) throw DomainError("negative emission factor");
  if (fuel_price < 0 || carbon_price < 0)
    throw DomainError("negative price in carbon adjustment");
  return fuel_price + emission_factor * carbon_price;
}

// --- Contiguous regime segmentation -----------------------------------------

struct RegimeSegmentation {
  // Strictly increasing interior hour indices; regime r spans
  // [breakpoints[r-1], breakpoints[r]) with sentinels 0 and n.
  std::vector<size_t> breakpoints;
  std::vector<std::pair<double, double>> centroids;  // (mean gas, mean coal)
  double explained_variance = 0;
  size_t n_hours = 0;

  size_t n_regimes() const { return breakpoints.size() + 1; }

  size_t regime_of(size_t hour) const {
    return std::upper_bound(breakpoints.begin(), breakpoints.end(), hour) -
           breakpoints.begin();
  }
};

namespace supply_detail {

// O(1) within-interval squared error around the centroid, per dimension,
// via prefix sums.
struct BivariatePrefix {
  std::vector<double> sx, sy, sxx, syy;
  explicit BivariatePrefix(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    sx.assign(n + 1, 0);
    sy.assign(n + 1, 0);
    sxx.assign(n + 1, 0);
    syy.assign(n + 1, 0);
    for (size_t i = 0; i < n; ++i) {
      sx[i + 1] = sx[i] + x[i];
      sy[i + 1] = sy[i] + y[i];
      sxx[i + 1] = sxx[i] + x[i] * x[i];
      syy[i + 1] = syy[i] + y[i] * y[i];
    }
  }
  // SSE over [i, j)
  double sse(size_t i, size_t j) const {
    const double n = static_cast<double>(j - i);
    const double dx = sx[j] - sx[i];
    const double dy = sy[j] - sy[i];
    double e = (sxx[j] - sxx[i]) - dx * dx / n + (syy[j] - syy[i]) - dy * dy / n;
    return e > 0 ? e : 0;
  }
};

}  // namespace supply_detail

// Exact DP segmentation of the bivariate fuel-price series into contiguous
// clusters. Returns the smallest breakpoint count whose explained-variance
// ratio reaches the target, capped at max_breakpoints.
inline RegimeSegmentation segment_regimes(const std::vector<double>& gas,
                                          const std::vector<double>& coal,
                                          size_t max_breakpoints = 11,
                                          double variance_target = 0.95) {
  const size_t n = gas.size();
  if (n < 2 || coal.size() != n)
    throw InfeasibleError("segmentation needs a bivariate series of length >= 2");
  if (!(variance_target > 0 && variance_target <= 1))
    throw ConfigError("variance_target must be in (0, 1]");
  if (max_breakpoints + 1 > n)
    throw InfeasibleError("series too short for requested breakpoint count");

  const supply_detail::BivariatePrefix pre(gas, coal);
  const double total_sse = pre.sse(0, n);

  auto finish = [&](const std::vector<size_t>& bps, double sse) {
    RegimeSegmentation seg;
    seg.breakpoints = bps;
    seg.n_hours = n;
    seg.explained_variance = total_sse <= 0 ? 1.0 : 1.0 - sse / total_sse;
    size_t lo = 0;
    for (size_t r = 0; r <= bps.size(); ++r) {
      const size_t hi = r < bps.size() ? bps[r] : n;
      const double len = static_cast<double>(hi - lo);
      seg.centroids.push_back(
          {(pre.sx[hi] - pre.sx[lo]) / len, (pre.sy[hi] - pre.sy[lo]) / len});
      lo = hi;
    }
    return seg;
  };

  if (total_sse <= 0) return finish({}, 0.0);

  // dp[j]: best SSE over the first j points with the current breakpoint count;
  // arg[k][j]: last breakpoint position at count k.
  std::vector<double> dp(n + 1), next(n + 1);
  std::vector<std::vector<std::uint32_t>> arg(max_breakpoints + 1,
                                              std::vector<std::uint32_t>(n + 1, 0));
  for (size_t j = 1; j <= n; ++j) dp[j] = pre.sse(0, j);
  if (1.0 - dp[n] / total_sse >= variance_target) return finish({}, dp[n]);

  double best_sse = dp[n];
  size_t best_k = 0;
  for (size_t k = 1; k <= max_breakpoints; ++k) {
    for (size_t j = k + 1; j <= n; ++j) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t bi = 0;
      for (size_t i = k; i < j; ++i) {
        const double v = dp[i] + pre.sse(i, j);
        if (v < best) {
          best = v;
          bi = static_cast<std::uint32_t>(i);
        }
      }
      next[j] = best;
      arg[k][j] = bi;
    }
    dp.swap(next);
    best_sse = dp[n];
    best_k = k;
    if (1.0 - best_sse / total_sse >= variance_target) break;
  }

  std::vector<size_t> bps(best_k);
  size_t j = n;
  for (size_t k = best_k; k >= 1; --k) {
    j = arg[k][j];
    bps[k - 1] = j;
  }
  return finish(bps, best_sse);
}

// --- Continuous piecewise-linear supply fit ----------------------------------

struct PiecewiseSupplyFit {
  std::vector<double> knots;   // interior knots along residual load, increasing
  double left_edge = 0;        // reference abscissa of the first segment
  double intercept = 0;        // fitted value at left_edge
  std::vector<double> slopes;  // one per segment, >= 0 after clamping
  double sse = 0;
  size_t n_observations = 0;

  double evaluate(double l) const {
    double v = intercept;
    double prev = left_edge;
    for (size_t j = 0; j < slopes.size(); ++j) {
      const double hi = j < knots.size() ? knots[j] : std::numeric_limits<double>::infinity();
      if (j == 0)
        v += slopes[0] * (std::min(l, hi) - prev);
      else
        v += slopes[j] * std::max(0.0, std::min(l, hi) - prev);
      prev = hi;
    }
    return v;
  }
};

// Local slope; at a knot the upper segment wins, outside the fitted range the
// boundary segment extrapolates.
inline double slope_at(const PiecewiseSupplyFit& fit, double l) {
  const size_t seg =
      std::upper_bound(fit.knots.begin(), fit.knots.end(), l) - fit.knots.begin();
  // l exactly at knot k -> upper_bound skips it only when strictly greater;
  // adjust: knots[seg-1] == l means l sits on the knot, take the upper segment.
  size_t s = seg;
  if (seg > 0 && fit.knots[seg - 1] == l) s = seg;  // upper_bound already gives upper
  return fit.slopes[s];
}

namespace supply_detail {

// Prefix sums for O(1) per-interval simple-regression SSE on sorted data.
struct RegressionPrefix {
  std::vector<double> sx, sy, sxx, sxy, syy;
  RegressionPrefix(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    sx.assign(n + 1, 0);
    sy.assign(n + 1, 0);
    sxx.assign(n + 1, 0);
    sxy.assign(n + 1, 0);
    syy.assign(n + 1, 0);
    for (size_t i = 0; i < n; ++i) {
      sx[i + 1] = sx[i] + x[i];
      sy[i + 1] = sy[i] + y[i];
      sxx[i + 1] = sxx[i] + x[i] * x[i];
      sxy[i + 1] = sxy[i] + x[i] * y[i];
      syy[i + 1] = syy[i] + y[i] * y[i];
    }
  }
  double sse(size_t i, size_t j) const {
    const double n = static_cast<double>(j - i);
    const double mx = (sx[j] - sx[i]) / n;
    const double my = (sy[j] - sy[i]) / n;
    const double sxx_ = (sxx[j] - sxx[i]) - n * mx * mx;
    const double sxy_ = (sxy[j] - sxy[i]) - n * mx * my;
    const double syy_ = (syy[j] - syy[i]) - n * my * my;
    const double e = sxx_ > 1e-12 ? syy_ - sxy_ * sxy_ / sxx_ : syy_;
    return e > 0 ? e : 0;
  }
};

// Least-squares continuous PWL fit with fixed knots; slope j can be forced to
// zero via the clamp mask. Returns (intercept, slopes, sse).
inline void fit_with_knots(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<double>& knots, double left_edge,
                           const std::vector<bool>& clamped, double& intercept,
                           std::vector<double>& slopes, double& sse) {
  const size_t n = x.size();
  const size_t n_seg = knots.size() + 1;
  std::vector<size_t> free_cols;
  for (size_t j = 0; j < n_seg; ++j)
    if (!clamped[j]) free_cols.push_back(j);
  const size_t p = 1 + free_cols.size();
  Eigen::MatrixXd A(n, p);
  Eigen::VectorXd b(n);
  auto basis = [&](double xi, size_t j) {
    const double lo = j == 0 ? left_edge : knots[j - 1];
    const double hi = j < knots.size() ? knots[j] : std::numeric_limits<double>::infinity();
    if (j == 0) return std::min(xi, hi) - lo;
    return std::max(0.0, std::min(xi, hi) - lo);
  };
  for (size_t i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    for (size_t c = 0; c < free_cols.size(); ++c) A(i, c + 1) = basis(x[i], free_cols[c]);
    b(i) = y[i];
  }
  Eigen::VectorXd beta = A.colPivHouseholderQr().solve(b);
  intercept = beta(0);
  slopes.assign(n_seg, 0.0);
  for (size_t c = 0; c < free_cols.size(); ++c) slopes[free_cols[c]] = beta(c + 1);
  sse = (A * beta - b).squaredNorm();
}

}  // namespace supply_detail

// Continuous piecewise-linear least-squares fit of price on residual load.
// Knot positions come from an exact DP over sorted split positions; segment
// count is selected by BIC; negative fitted slopes are clamped to zero and the
// remaining parameters refitted.
inline PiecewiseSupplyFit fit_piecewise(const std::vector<double>& prices,
                                        const std::vector<double>& residual_load,
                                        size_t max_segments = 6,
                                        size_t min_points_per_segment = 10) {
  const size_t n = prices.size();
  if (residual_load.size() != n) throw ShapeError("price/load length mismatch");
  if (n < 10 * max_segments)
    throw InfeasibleError("regime has too few observations for the requested segments");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return residual_load[a] < residual_load[b];
  });
  std::vector<double> x(n), y(n);
  for (size_t i = 0; i < n; ++i) {
    x[i] = residual_load[order[i]];
    y[i] = prices[order[i]];
  }

  const supply_detail::RegressionPrefix pre(x, y);
  const size_t msz = min_points_per_segment;

  // DP over split positions for each candidate segment count.
  // dp[j] = best free-segment SSE for first j points; splits recovered per count.
  struct Candidate {
    std::vector<double> knots;
    double intercept;
    std::vector<double> slopes;
    double sse;
    double bic;
  };
  std::vector<Candidate> candidates;

  std::vector<double> dp(n + 1), next(n + 1);
  std::vector<std::vector<std::uint32_t>> arg(max_segments,
                                              std::vector<std::uint32_t>(n + 1, 0));
  for (size_t j = msz; j <= n; ++j) dp[j] = pre.sse(0, j);

  auto build_candidate = [&](size_t n_seg, const std::vector<size_t>& splits) {
    std::vector<double> knots;
    for (size_t s : splits) knots.push_back((x[s - 1] + x[s]) / 2.0);
    Candidate c;
    c.knots = knots;
    std::vector<bool> clamped(n_seg, false);
    for (int pass = 0; pass < static_cast<int>(n_seg) + 1; ++pass) {
      supply_detail::fit_with_knots(x, y, knots, x.front(), clamped, c.intercept,
                                    c.slopes, c.sse);
      bool any = false;
      for (size_t j = 0; j < n_seg; ++j)
        if (!clamped[j] && c.slopes[j] < 0) {
          clamped[j] = true;
          any = true;
        }
      if (!any) break;
    }
    const double p_eff = static_cast<double>(n_seg + 1);
    c.bic = n * std::log(std::max(c.sse, 1e-12) / n) + p_eff * std::log((double)n);
    candidates.push_back(std::move(c));
  };

  build_candidate(1, {});
  for (size_t k = 1; k < max_segments; ++k) {
    // k splits -> k+1 segments
    bool feasible = false;
    for (size_t j = (k + 1) * msz; j <= n; ++j) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t bi = 0;
      for (size_t i = k * msz; i + msz <= j; ++i) {
        const double v = dp[i] + pre.sse(i, j);
        if (v < best) {
          best = v;
          bi = static_cast<std::uint32_t>(i);
        }
      }
      next[j] = best;
      arg[k][j] = bi;
      if (j == n && std::isfinite(best)) feasible = true;
    }
    dp.swap(next);
    if (!feasible) break;
    std::vector<size_t> splits(k);
    size_t j = n;
    for (size_t kk = k; kk >= 1; --kk) {
      j = arg[kk][j];
      splits[kk - 1] = j;
    }
    build_candidate(k + 1, splits);
  }

  const Candidate* best = &candidates.front();
  for (const auto& c : candidates)
    if (c.bic < best->bic) best = &c;

  PiecewiseSupplyFit fit;
  fit.knots = best->knots;
  fit.left_edge = x.front();
  fit.intercept = best->intercept;
  fit.slopes = best->slopes;
  fit.sse = best->sse;
  fit.n_observations = n;
  return fit;
}

// --- Whole-market supply model ----------------------------------------------

struct SupplyModel {
  RegimeSegmentation segmentation;
  std::vector<PiecewiseSupplyFit> fits;  // one per regime

  double delta_at(size_t hour, double l) const {
    return slope_at(fits[segmentation.regime_of(hour)], l);
  }
};

}  // namespace mpa
